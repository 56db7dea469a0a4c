"""Credit, reputation and centrality as queue-backed state machines."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .queueing import QueueTrace, inverse_transform, step_queue


@dataclass(frozen=True)
class CreditAccount:
    level: float
    c_max: float
    c_th: float
    delta: float

    def __post_init__(self):
        if not 0 <= self.c_th < self.c_max:
            raise ValidationError("c_th", f"need 0 <= c_th < c_max, got c_th={self.c_th}, c_max={self.c_max}")
        if not 0 < self.delta < 1:
            raise ValidationError("delta", f"must lie in (0, 1), got {self.delta}")
        if not 0 <= self.level <= self.c_max:
            raise ValidationError("level", f"must lie in [0, c_max], got {self.level}")


@dataclass(frozen=True)
class CreditCheck:
    outage_prob: float
    satisfied: bool
    n_slots: int


def check_credit_constraint(trace: QueueTrace, account: CreditAccount,
                            loan: float = 0.0) -> CreditCheck:
    """Fraction of post-warmup slots with credit below the (loan-shifted) threshold."""
    if trace.config.c_max != account.c_max:
        raise ValidationError("account.c_max", f"trace cap {trace.config.c_max} differs from account cap {account.c_max}")
    c_th = effective_outage_threshold(account, loan)
    levels = trace.stats
    low = levels < c_th
    budget_over = inverse_transform(levels, account.c_max) > account.c_max - c_th
    # same event in exact arithmetic; float rounding may only split slots sitting on the threshold
    split = low != budget_over
    assert np.all(np.abs(levels[split] - c_th) <= 8 * np.finfo(float).eps * account.c_max), \
        "credit/budget outage events disagree"
    p = float(low.mean())
    return CreditCheck(p, p < account.delta, int(levels.size))


@dataclass(frozen=True)
class ReputationState:
    """Reputation as an exponentially-forgetting filter or as a capped queue."""

    mode: str
    value: float = 0.0
    lam: float = 0.9
    r_max: float = math.inf

    def __post_init__(self):
        if self.mode not in ("filter", "queue"):
            raise ValidationError("mode", f"must be 'filter' or 'queue', got {self.mode!r}")
        if self.value < 0:
            raise ValidationError("value", "must be >= 0")
        if self.mode == "filter" and not 0 < self.lam < 1:
            raise ValidationError("lam", "forgetting factor must lie in (0, 1)")
        if self.mode == "queue" and not self.value <= self.r_max:
            raise ValidationError("value", "queue level exceeds r_max")


def reputation_filter_update(state: ReputationState, gain: float) -> ReputationState:
    if state.mode != "filter":
        raise ValidationError("mode", "filter update on a queue-mode state")
    if gain < 0:
        raise ValidationError("gain", "must be >= 0")
    return replace(state, value=state.lam * state.value + (1 - state.lam) * gain)


def reputation_queue_update(state: ReputationState, gain: float, spend: float) -> ReputationState:
    if state.mode != "queue":
        raise ValidationError("mode", "queue update on a filter-mode state")
    if gain < 0 or spend < 0:
        raise ValidationError("gain", "gain and spend must be >= 0")
    return replace(state, value=step_queue(state.value, gain, spend, state.r_max))


def reputation_filter_path(gains, lam: float, value0: float = 0.0) -> np.ndarray:
    """Filter output after each gain; same arithmetic as the per-step update."""
    state = ReputationState("filter", value0, lam)
    out = np.empty(len(gains))
    for t, g in enumerate(gains):
        state = reputation_filter_update(state, float(g))
        out[t] = state.value
    return out


@dataclass(frozen=True)
class LoanPolicy:
    kappa: float
    l_max: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError("kappa", "must be >= 0")
        if self.l_max < 0:
            raise ValidationError("l_max", "must be >= 0")


def loan_limit(policy: LoanPolicy, reputation: float) -> float:
    if reputation < 0:
        raise ValidationError("reputation", "must be >= 0")
    return min(policy.kappa * reputation, policy.l_max)


def effective_outage_threshold(account: CreditAccount, loan: float) -> float:
    """Credit level below which an outage still happens once ``loan`` is available."""
    if loan < 0:
        raise ValidationError("loan", "must be >= 0")
    return max(account.c_th - loan, 0.0)


@dataclass(frozen=True)
class CentralityState:
    level: float
    mu: float

    def __post_init__(self):
        if self.level < 0:
            raise ValidationError("level", "must be >= 0")
        if not self.mu > 0:
            raise ValidationError("mu", "virtual departure rate must be > 0")


def centrality_update(state: CentralityState, increment: float) -> CentralityState:
    if increment < 0:
        raise ValidationError("increment", "must be >= 0")
    return replace(state, level=max(state.level + increment - state.mu, 0.0))


def centrality_path(increments, mu: float, level0: float = 0.0) -> np.ndarray:
    state = CentralityState(level0, mu)
    out = np.empty(len(increments))
    for t, inc in enumerate(increments):
        state = centrality_update(state, float(inc))
        out[t] = state.level
    return out


def drain_slots(level: float, mu: float) -> int:
    """Slots until a centrality level with no further increments reaches zero."""
    state = CentralityState(level, mu)
    n = 0
    while state.level > 0:
        state = centrality_update(state, 0.0)
        n += 1
    return n
