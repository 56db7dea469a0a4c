"""Credit-aware two-hop D2D relay: A -> B -> C sharing a cellular UE's spectrum.

Device C buys relayed data from A through B and pays ``price * markup``
credit per delivered bit. C's credit is a capped queue fed by an independent
earning process; the transmission-control scheme decides how many bits C
requests in each slot.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy import integrate, optimize

from . import _kernels
from .effective import Ccdf, QoSExponent, TailFit, empirical_ccdf, fit_decay_rate, solve_theta, target_theta
from .errors import FitError, InfeasibleError, NoFiniteRootError, StabilityError, ValidationError
from .processes import BernoulliBatch, DiscreteUniform, ProcessSpec, draw, mean_rate, rng_stream, seed_sequence
from .queueing import QueueConfig, QueueTrace
from .social import CreditAccount, check_credit_constraint

CHUNK = 1 << 20
LN2 = math.log(2.0)
STREAM_CHANNEL, STREAM_EARN, STREAM_CALIBRATION = 0, 1, 2
LINKS = ("ab", "bc", "a_ue", "b_ue")


class SchemeKind(str, enum.Enum):
    QOS_DRIVEN = "qos_driven"
    WATER_FILLING = "water_filling"
    ABSOLUTE_CONTROL = "absolute_control"


@dataclass(frozen=True)
class ChannelConfig:
    """Mean power gains (per watt, relative to unit noise) of the four links."""

    ab: float = 10.0
    bc: float = 10.0
    a_ue: float = 0.5
    b_ue: float = 0.5

    def __post_init__(self):
        for name in LINKS:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"channel.{name}", f"mean gain must be > 0, got {v}")

    @property
    def means(self) -> np.ndarray:
        return np.array([self.ab, self.bc, self.a_ue, self.b_ue])


@dataclass(frozen=True)
class ScenarioConfig:
    earn_process: ProcessSpec
    account: CreditAccount
    scheme: SchemeKind = SchemeKind.QOS_DRIVEN
    n_slots: int = 10_000_000
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    p_max: float = 2.0
    p_avg: float = 1.0
    interference_cap: float = 1.0
    noise: float = 1.0
    bandwidth: float = 1.0
    price: float = 1.0
    markup: float = 1.1
    seed: int = 0
    warmup_slots: int = 100_000
    grid_states: int = 64
    wf_samples: int = 1 << 17
    trace_slots: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))
        for name in ("p_max", "p_avg", "interference_cap", "noise", "bandwidth"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(name, f"must be > 0, got {v}")
        if self.p_avg > self.p_max:
            raise ValidationError("p_avg", "average power budget exceeds p_max")
        if not (math.isfinite(self.price) and self.price >= 0):
            raise ValidationError("price", "must be >= 0")
        if not self.markup >= 1:
            raise ValidationError("markup", "must be >= 1")
        if self.n_slots < self.warmup_slots + 1:
            raise ValidationError("n_slots", "must exceed warmup_slots")
        if self.grid_states < 2:
            raise ValidationError("grid_states", "need at least 2 states")

    @property
    def cost_per_bit(self) -> float:
        return self.price * self.markup

    @property
    def queue_config(self) -> QueueConfig:
        return QueueConfig(self.account.c_max, self.account.level, self.warmup_slots)


# ---------------------------------------------------------------------------
# Channel and link budget
# ---------------------------------------------------------------------------

def _channel_key(seed: int, stream: int) -> np.ndarray:
    return seed_sequence(seed, stream).generate_state(2, np.uint64)


def channel_block(channel: ChannelConfig, start: int, n: int, seed: int,
                  stream: int = STREAM_CHANNEL) -> np.ndarray:
    """Exponential power gains for slots ``start .. start+n-1``, shape ``(n, 4)``.

    Slot ``t`` is a pure function of ``(seed, t)``: one Philox block per slot,
    so any chunking of the run yields the same gains.
    """
    bitgen = np.random.Philox(key=_channel_key(seed, stream), counter=[int(start), 0, 0, 0])
    raw = bitgen.random_raw(4 * n).reshape(n, 4)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    return -np.log(u) * channel.means


def sample_channel(config: ScenarioConfig, slot: int, seed: Optional[int] = None) -> Dict[str, float]:
    gains = channel_block(config.channel, slot, 1, config.seed if seed is None else seed)[0]
    return dict(zip(LINKS, gains.tolist()))


def achievable_rate(gain, power, noise: float = 1.0, bandwidth: float = 1.0):
    """Per-hop rate ``W log2(1 + g p / N)`` in bits per slot."""
    return bandwidth * np.log2(1.0 + np.asarray(gain) * np.asarray(power) / noise)


def relay_rate(gain_ab, power_a, gain_bc, power_b, noise: float = 1.0, bandwidth: float = 1.0):
    """End-to-end rate of the half-duplex two-slot relay: half the weaker hop."""
    return 0.5 * np.minimum(achievable_rate(gain_ab, power_a, noise, bandwidth),
                            achievable_rate(gain_bc, power_b, noise, bandwidth))


def power_for_bits(bits, gain, noise: float = 1.0, bandwidth: float = 1.0):
    """Hop power that carries ``bits`` end-to-end in its half of the relay frame."""
    return np.expm1(2.0 * np.asarray(bits) * LN2 / bandwidth) * noise / np.asarray(gain)


def interference_feasible_power(gain_to_cellular, interference_cap: float, p_max: float):
    if np.any(np.asarray(gain_to_cellular) <= 0) or interference_cap <= 0 or p_max <= 0:
        raise ValidationError("gain_to_cellular", "gains, cap and p_max must be > 0")
    out = np.minimum(p_max, interference_cap / np.asarray(gain_to_cellular, dtype=float))
    return float(out) if out.ndim == 0 else out


def waterfilling_allocation(gain_samples, p_avg: float, per_slot_cap=None, noise: float = 1.0,
                            rtol: float = 1e-6):
    """Water-filling over equiprobable fading states.

    Returns ``(powers, water_level)`` with ``p = min(cap, max(level - N/g, 0))``
    and mean power ``p_avg``; if the caps cannot absorb ``p_avg`` every state
    sits at its cap and the level is ``inf``.
    """
    g = np.asarray(gain_samples, dtype=float)
    if np.any(g <= 0):
        raise ValidationError("gain_samples", "gains must be > 0")
    caps = np.full(g.shape, np.inf) if per_slot_cap is None else np.broadcast_to(per_slot_cap, g.shape).astype(float)
    if p_avg <= 0:
        return np.zeros_like(g), 0.0
    if np.mean(caps) <= p_avg:
        return caps.copy(), math.inf
    inv = noise / g

    def avg(level):
        return float(np.mean(np.minimum(caps, np.maximum(level - inv, 0.0))))

    lo, hi = 0.0, p_avg + float(inv.max())
    finite = np.isfinite(caps)
    if finite.any():
        hi = max(hi, float(np.max(caps[finite] + inv[finite])))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        a = avg(mid)
        if abs(a - p_avg) <= rtol * p_avg:
            break
        lo, hi = (mid, hi) if a < p_avg else (lo, mid)
    return np.minimum(caps, np.maximum(mid - inv, 0.0)), mid


def _link_budget(config: ScenarioConfig, gains: np.ndarray, peak: bool = False):
    """Per-hop power limits and the relay rate they allow.

    Rate-controlled schemes transmit at the nominal power ``p_avg``; only
    power-adaptive schemes (``peak=True``) may go up to ``p_max``. The
    interference cap applies either way.
    """
    limit = config.p_max if peak else config.p_avg
    cap_a = interference_feasible_power(gains[:, 2], config.interference_cap, limit)
    cap_b = interference_feasible_power(gains[:, 3], config.interference_cap, limit)
    feasible = relay_rate(gains[:, 0], cap_a, gains[:, 1], cap_b, config.noise, config.bandwidth)
    return cap_a, cap_b, feasible


# ---------------------------------------------------------------------------
# Feasible-rate distribution (closed form) and QoS calibration
# ---------------------------------------------------------------------------

def _hop_snr_sf(y, mean_gain: float, mean_ue: float, config: ScenarioConfig):
    """``Pr{g * min(p_avg, I/h) / N > y}`` for exponential ``g`` and ``h``."""
    h0 = config.interference_cap / config.p_avg
    a = y * config.noise / (mean_gain * config.interference_cap)
    rate = a + 1.0 / mean_ue
    capped = -np.expm1(-h0 / mean_ue) * np.exp(-y * config.noise / (mean_gain * config.p_avg))
    return capped + (1.0 / mean_ue) / rate * np.exp(-rate * h0)


def feasible_rate_sf(x, config: ScenarioConfig):
    """Survival function of the per-slot interference-feasible relay rate."""
    x = np.asarray(x, dtype=float)
    y = np.expm1(2.0 * np.maximum(x, 0.0) * LN2 / config.bandwidth)
    ch = config.channel
    sf = _hop_snr_sf(y, ch.ab, ch.a_ue, config) * _hop_snr_sf(y, ch.bc, ch.b_ue, config)
    return np.where(x < 0, 1.0, sf)


def feasible_rate_grid(config: ScenarioConfig, n_states: Optional[int] = None) -> np.ndarray:
    """Conditional means of the feasible rate over ``n_states`` equiprobable bins."""
    k = n_states or config.grid_states
    sf = lambda x: float(feasible_rate_sf(x, config))
    hi = 1.0
    while sf(hi) > 1e-300:
        hi *= 2
    edges = [0.0]
    for j in range(1, k):
        target = 1.0 - j / k
        edges.append(optimize.brentq(lambda x: sf(x) - target, edges[-1], hi, xtol=1e-14, rtol=1e-14))
    edges.append(hi)
    means = np.empty(k)
    for j in range(k):
        a, b = edges[j], edges[j + 1]
        area, _ = integrate.quad(sf, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
        means[j] = k * (a * sf(a) - b * sf(b) + area)
    return means


@dataclass(frozen=True)
class Calibration:
    beta: float
    theta_target: QoSExponent
    theta: QoSExponent
    unit_spend: DiscreteUniform

    def as_record(self) -> dict:
        return {"beta": self.beta, "theta_target": self.theta_target.theta,
                "theta_at_beta": self.theta.theta, "theta_kind": self.theta.kind}


def _theta_of(spend: ProcessSpec, earn: ProcessSpec) -> QoSExponent:
    try:
        return solve_theta(spend, earn)
    except StabilityError:
        return QoSExponent(math.nextafter(0.0, 1.0))
    except NoFiniteRootError:
        return QoSExponent.infinite()


def qos_calibrate(config: ScenarioConfig, tol: float = 1e-4) -> Calibration:
    """Largest spending scale ``beta`` in (0, 1] whose budget-queue exponent meets the target."""
    acct = config.account
    target = target_theta(acct.c_max, acct.c_th, acct.delta)
    unit = DiscreteUniform(tuple((config.cost_per_bit * feasible_rate_grid(config)).tolist()))

    def theta(beta):
        return _theta_of(DiscreteUniform(tuple(beta * v for v in unit.support)), config.earn_process)

    th = theta(1.0)
    if th.theta >= target.theta:
        return Calibration(1.0, target, th, unit)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if theta(mid).theta >= target.theta:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise InfeasibleError(f"earning process cannot meet theta_target={target.theta:.6g} "
                              f"even with spending scaled below {hi:.3g}")
    return Calibration(lo, target, theta(lo), unit)


@dataclass(frozen=True)
class WaterFillingPlan:
    water_level: float
    budget: float
    mean_spend: float
    balanced: bool
    spend_samples: np.ndarray = field(repr=False)

    def as_record(self) -> dict:
        return {"water_level": self.water_level, "budget": self.budget,
                "mean_spend": self.mean_spend, "balanced": self.balanced}


def _bottleneck(config: ScenarioConfig, gains: np.ndarray):
    cap_a, cap_b, _ = _link_budget(config, gains, peak=True)
    return np.minimum(gains[:, 0], gains[:, 1]), np.minimum(cap_a, cap_b)


def waterfilling_plan(config: ScenarioConfig, spend_limit: Optional[float] = None) -> WaterFillingPlan:
    """Water level on the bottleneck hop, computed from a calibration draw of fading states.

    The scheme looks at credit only through a mean-balance check, reported as
    ``balanced`` (mean spending within mean earning); it does not change the
    allocation. ``spend_limit`` instead cuts the power budget until mean
    spending equals it (used for throughput-matched comparisons).
    """
    gains = channel_block(config.channel, 0, config.wf_samples, config.seed, STREAM_CALIBRATION)
    h, cap = _bottleneck(config, gains)

    def spend_at(budget):
        p, level = waterfilling_allocation(h, budget, cap, config.noise)
        return config.cost_per_bit * 0.5 * achievable_rate(h, p, config.noise, config.bandwidth), level

    budget = config.p_avg
    spend, level = spend_at(budget)
    if spend_limit is not None and spend.mean() > spend_limit:
        lo, hi = 0.0, budget
        for _ in range(100):
            budget = 0.5 * (lo + hi)
            spend, level = spend_at(budget)
            if abs(spend.mean() - spend_limit) <= 1e-9 * spend_limit:
                break
            lo, hi = (budget, hi) if spend.mean() < spend_limit else (lo, budget)
    balanced = bool(spend.mean() <= mean_rate(config.earn_process))
    return WaterFillingPlan(level, budget, float(spend.mean()), balanced, spend)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def wilson_upper(successes: int, n: int, alpha: float = 0.05) -> float:
    from statsmodels.stats.proportion import proportion_confint
    return float(proportion_confint(successes, n, alpha=alpha, method="wilson")[1])


@dataclass(frozen=True)
class RunMetrics:
    scheme: SchemeKind
    credit_trace: QueueTrace = field(repr=False)
    outage_prob: float
    outage_upper: float
    throughput: float
    avg_power: float
    tail_fit: Optional[TailFit]
    constraint_satisfied: bool
    budget_ccdf: Ccdf = field(repr=False)
    min_credit: float
    mean_credit: float
    max_interference_ratio: float
    ledger: Dict[str, float]
    beta: Optional[float] = None
    slot_log: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "outage_prob": self.outage_prob,
            "outage_wilson_upper": self.outage_upper,
            "constraint_satisfied": self.constraint_satisfied,
            "throughput": self.throughput,
            "avg_power": self.avg_power,
            "min_credit": self.min_credit,
            "mean_credit": self.mean_credit,
            "max_interference_ratio": self.max_interference_ratio,
            "tail_fit": self.tail_fit.as_record() if self.tail_fit else None,
            "beta": self.beta,
            **{f"ledger_{k}": v for k, v in self.ledger.items()},
        }

    def credit_cdf(self, levels: np.ndarray) -> np.ndarray:
        """``Pr{Q <= x}`` of post-warmup credit."""
        ordered = np.sort(self.credit_trace.stats)
        return np.searchsorted(ordered, levels, side="right") / ordered.size

    def cdf_table(self, n_levels: int = 201):
        """Credit CDF and the budget-queue CCDF (same event, two axes) as ``(header, rows)``."""
        c_max = self.credit_trace.config.c_max
        levels = np.linspace(0.0, c_max, n_levels)
        cdf = self.credit_cdf(levels)
        budget = empirical_ccdf(self.credit_trace.inverse(), c_max - levels)
        rows = [[repr(float(x)), repr(float(p)), repr(math.log10(p)) if p > 0 else "-inf",
                 repr(float(bx)), repr(float(bp))]
                for x, p, bx, bp in zip(levels, cdf, budget.levels, budget.probs)]
        return ["credit", "cdf", "log10_cdf", "budget", "budget_ccdf"], rows

    def slot_table(self):
        log = self.slot_log
        header = ["slot", "g_ab", "g_bc", "g_a_ue", "g_b_ue", "power", "bits", "spend", "earn", "credit"]
        rows = [[i + 1] + [repr(float(v)) for v in log["gains"][i]] +
                [repr(float(log[k][i])) for k in ("power", "bits", "spend", "earn", "credit")]
                for i in range(len(log["bits"]))]
        return header, rows

    def write_cdf_csv(self, path, n_levels: int = 201) -> None:
        _write_table(path, *self.cdf_table(n_levels))

    def write_slot_csv(self, path) -> None:
        _write_table(path, *self.slot_table())


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _requests(config: ScenarioConfig, gains: np.ndarray, beta: float,
              plan: Optional[WaterFillingPlan]) -> np.ndarray:
    """Bits the scheme asks for in each slot, before any credit truncation."""
    cap_a, cap_b, feasible = _link_budget(config, gains)
    if config.scheme is SchemeKind.QOS_DRIVEN:
        return beta * feasible
    if config.scheme is SchemeKind.ABSOLUTE_CONTROL:
        return feasible
    h, cap = _bottleneck(config, gains)
    if math.isinf(plan.water_level):
        p = cap
    else:
        p = np.minimum(cap, np.maximum(plan.water_level - config.noise / h, 0.0))
    return 0.5 * achievable_rate(h, p, config.noise, config.bandwidth)


def run_scenario(config: ScenarioConfig, calibration: Optional[Calibration] = None,
                 plan: Optional[WaterFillingPlan] = None, beta: Optional[float] = None) -> RunMetrics:
    """Simulate C's credit account under ``config.scheme`` for ``n_slots`` slots.

    ``beta`` overrides the calibrated QoS spending scale (used for
    throughput-matched comparisons).
    """
    scheme = config.scheme
    if scheme is SchemeKind.QOS_DRIVEN and beta is None:
        beta = (calibration or qos_calibrate(config)).beta
    if scheme is SchemeKind.WATER_FILLING and plan is None:
        plan = waterfilling_plan(config)
    acct = config.account
    cost = config.cost_per_bit
    qcfg = config.queue_config
    n, warm = config.n_slots, config.warmup_slots
    levels = np.empty(n)
    earn_rng = rng_stream(config.seed, STREAM_EARN)
    n_log = min(config.trace_slots, n)
    log = {k: np.empty(n_log) for k in ("power", "bits", "spend", "earn", "credit")}
    log["gains"] = np.empty((n_log, 4))
    sums = dict(bits=0.0, power=0.0, spend=0.0, earn=0.0)
    max_ratio = 0.0
    q = qcfg.q0
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        gains = channel_block(config.channel, start, m, config.seed)
        earn = draw(config.earn_process, m, earn_rng)
        want = _requests(config, gains, beta if beta is not None else 1.0, plan)
        lv = levels[start:start + m]
        spend = np.empty(m)
        q = _kernels.credit_spend(q, earn, cost * want, acct.c_max, acct.c_th,
                                  scheme is SchemeKind.ABSOLUTE_CONTROL, lv, spend)
        bits = spend / cost if cost > 0 else want
        cap_a, cap_b, _ = _link_budget(config, gains, peak=config.scheme is SchemeKind.WATER_FILLING)
        p_a = np.minimum(power_for_bits(bits, gains[:, 0], config.noise, config.bandwidth), cap_a)
        p_b = np.minimum(power_for_bits(bits, gains[:, 1], config.noise, config.bandwidth), cap_b)
        power = np.maximum(p_a, p_b)
        ratio = np.maximum(gains[:, 2] * p_a, gains[:, 3] * p_b) / config.interference_cap
        max_ratio = max(max_ratio, float(ratio.max()))
        keep = slice(max(warm - start, 0), m)
        sums["bits"] += float(bits[keep].sum())
        sums["power"] += float(power[keep].sum())
        sums["spend"] += float(spend[keep].sum())
        sums["earn"] += float(earn[keep].sum())
        if start < n_log:
            k = min(n_log - start, m)
            for name, arr in (("power", power), ("bits", bits), ("spend", spend), ("earn", earn), ("credit", lv)):
                log[name][start:start + k] = arr[:k]
            log["gains"][start:start + k] = gains[:k]
    levels.setflags(write=False)
    trace = QueueTrace(levels, qcfg)
    check = check_credit_constraint(trace, acct)
    stats = trace.stats
    n_stats = stats.size
    outage_count = int(np.count_nonzero(stats < acct.c_th))
    budget = empirical_ccdf(trace.inverse(), np.linspace(0.0, acct.c_max, 201))
    try:
        # budget tail up to the outage boundary; past it the zero-credit floor truncates the queue
        fit = fit_decay_rate(budget, (0.1 * acct.c_max, acct.c_max - acct.c_th))
    except FitError:
        fit = None
    paid = sums["spend"]
    return RunMetrics(
        scheme=scheme,
        credit_trace=trace,
        outage_prob=check.outage_prob,
        outage_upper=wilson_upper(outage_count, n_stats),
        throughput=sums["bits"] / n_stats,
        avg_power=sums["power"] / n_stats,
        tail_fit=fit,
        constraint_satisfied=check.satisfied,
        budget_ccdf=budget,
        min_credit=float(stats.min()),
        mean_credit=float(stats.mean()),
        max_interference_ratio=max_ratio,
        ledger={"paid_by_c": paid, "received_by_b": paid, "forwarded_to_a": paid / config.markup,
                "earned_by_c": sums["earn"]},
        beta=beta if scheme is SchemeKind.QOS_DRIVEN else None,
        slot_log=log,
    )


# ---------------------------------------------------------------------------
# Scheme comparison
# ---------------------------------------------------------------------------

def reference_config(**overrides) -> ScenarioConfig:
    """Documented reference scenario for the three-scheme comparison.

    Earning is bursty (2.5 credits with probability 0.5) and just covers the
    full-rate spending of the QoS-driven scheme at ``delta = 1e-3``, so the
    calibrated spending scale sits at the boundary ``beta = 1``.
    """
    base = dict(
        earn_process=BernoulliBatch(2.5, 0.5),
        account=CreditAccount(level=50.0, c_max=100.0, c_th=20.0, delta=1e-3),
        n_slots=10_000_000,
        channel=ChannelConfig(ab=10.0, bc=10.0, a_ue=0.5, b_ue=0.5),
        p_max=2.0,
        p_avg=1.0,
        interference_cap=1.0,
        price=1.0,
        markup=1.1,
        seed=2024,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass(frozen=True)
class SchemeComparison:
    calibration: Calibration
    plan: WaterFillingPlan
    runs: Dict[SchemeKind, RunMetrics]
    matched: RunMetrics
    matched_plan: WaterFillingPlan
    delta: float

    @property
    def qos(self) -> RunMetrics:
        return self.runs[SchemeKind.QOS_DRIVEN]

    @property
    def wf(self) -> RunMetrics:
        return self.runs[SchemeKind.WATER_FILLING]

    @property
    def absolute(self) -> RunMetrics:
        return self.runs[SchemeKind.ABSOLUTE_CONTROL]

    def cdf_gap(self, n_levels: int = 201) -> np.ndarray:
        """Throughput-matched water-filling credit CDF minus the QoS-driven credit CDF."""
        levels = np.linspace(0.0, self.qos.credit_trace.config.c_max, n_levels)
        return self.matched.credit_cdf(levels) - self.qos.credit_cdf(levels)

    def facts(self) -> dict:
        gap = self.cdf_gap()
        n = self.wf.credit_trace.stats.size
        slack = 3.0 / math.sqrt(n)
        equal = abs(self.matched.throughput - self.qos.throughput) <= 0.01 * self.qos.throughput
        return {
            "wf_violates_outage": self.wf.outage_prob > self.delta,
            "wf_lower_credit_at_equal_throughput": bool(equal and gap.min() >= -slack and gap.max() > slack),
            "wf_cdf_gap_max": float(gap.max()),
            "wf_cdf_gap_min": float(gap.min()),
            "matched_wf_budget": self.matched_plan.budget,
            "matched_wf_throughput": self.matched.throughput,
            "matched_wf_outage": self.matched.outage_prob,
            "absolute_below_qos_throughput": self.absolute.throughput < self.qos.throughput,
            "absolute_min_credit": self.absolute.min_credit,
        }


def compare_schemes(config: ScenarioConfig) -> SchemeComparison:
    """Run every scheme on identical channel and earning randomness.

    A fourth water-filling run has its power budget cut until its expected
    spending equals the QoS-driven scheme's, giving the equal-throughput
    reference for the credit-distribution comparison.
    """
    cal = qos_calibrate(config)
    plan = waterfilling_plan(config)
    runs = {s: run_scenario(replace(config, scheme=s), cal, plan) for s in SchemeKind}
    qos_spend = cal.beta * float(np.mean(cal.unit_spend.support))
    matched_plan = waterfilling_plan(config, spend_limit=qos_spend)
    matched = run_scenario(replace(config, scheme=SchemeKind.WATER_FILLING), plan=matched_plan)
    return SchemeComparison(cal, plan, runs, matched, matched_plan, config.account.delta)
