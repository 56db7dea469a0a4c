"""Slotted capped queues, the inverse (budget) view, and an exact DTMC oracle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from . import _kernels
from .errors import NumericError, UnsupportedSpecError, ValidationError
from .processes import BernoulliBatch, Constant, DiscreteUniform, ProcessSpec, Trace

INTEGER_TOL = 1e-12


@dataclass(frozen=True)
class QueueConfig:
    """Cap, initial level and warm-up length of a slotted queue.

    ``q0`` defaults to half the cap (zero for an uncapped queue).
    """

    c_max: float = math.inf
    q0: Optional[float] = None
    warmup_slots: int = 100_000

    def __post_init__(self):
        c_max = float(self.c_max)
        if not c_max > 0:
            raise ValidationError("c_max", "must be > 0")
        q0 = (c_max / 2 if math.isfinite(c_max) else 0.0) if self.q0 is None else float(self.q0)
        if not 0.0 <= q0 <= c_max:
            raise ValidationError("q0", f"must lie in [0, c_max], got {q0}")
        if int(self.warmup_slots) < 0:
            raise ValidationError("warmup_slots", "must be >= 0")
        object.__setattr__(self, "c_max", c_max)
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "warmup_slots", int(self.warmup_slots))


@dataclass(frozen=True)
class QueueTrace:
    """Levels ``Q[1..n]`` reached after each slot; ``Q[0]`` is ``config.q0``."""

    levels: np.ndarray = field(repr=False)
    config: QueueConfig

    def __len__(self):
        return len(self.levels)

    @property
    def stats(self) -> np.ndarray:
        """Post-warmup levels used for every statistic."""
        return self.levels[self.config.warmup_slots:]

    def inverse(self) -> np.ndarray:
        return inverse_transform(self.stats, self.config.c_max)

    def to_csv(self, path, limit: Optional[int] = None) -> None:
        levels = self.levels if limit is None else self.levels[:limit]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "level"])
            for t, q in enumerate(levels, start=1):
                w.writerow([t, repr(float(q))])


def step_queue(q: float, a: float, r: float, c_max: float) -> float:
    return min(c_max, max(q + a - r, 0.0))


def _values(x: Union[Trace, np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(x.values if isinstance(x, Trace) else x, dtype=float)


def simulate_queue(arrival: Union[Trace, np.ndarray], departure: Union[Trace, np.ndarray],
                   config: QueueConfig) -> QueueTrace:
    a, r = _values(arrival), _values(departure)
    if a.shape != r.shape:
        raise ValidationError("departure", f"length {len(r)} does not match arrival length {len(a)}")
    if len(a) < config.warmup_slots + 1:
        raise ValidationError("arrival", f"need at least warmup_slots + 1 = {config.warmup_slots + 1} slots")
    levels = _kernels.capped_queue(config.q0, a, r, config.c_max)
    levels.setflags(write=False)
    return QueueTrace(levels, config)


def inverse_transform(q, c_max: float):
    """Budget-queue view ``max(c_max - q, 0)``; scalar or array in, same out."""
    if not math.isfinite(c_max):
        raise ValidationError("c_max", "inverse view needs a finite cap")
    out = np.maximum(c_max - np.asarray(q, dtype=float), 0.0)
    return float(out) if out.ndim == 0 else out


def level_histogram(trace: QueueTrace) -> np.ndarray:
    """Counts of post-warmup integer levels ``0..c_max`` (integer-valued queues only)."""
    levels = trace.stats
    idx = np.rint(levels).astype(np.int64)
    if np.any(np.abs(levels - idx) > INTEGER_TOL):
        raise UnsupportedSpecError("levels", "histogram needs integer-valued levels")
    size = int(trace.config.c_max) + 1 if math.isfinite(trace.config.c_max) else int(idx.max()) + 1
    return np.bincount(idx, minlength=size)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    n = max(len(p), len(q))
    p = np.pad(np.asarray(p, float), (0, n - len(p)))
    q = np.pad(np.asarray(q, float), (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# Exact oracle
# ---------------------------------------------------------------------------

def integer_pmf(spec: ProcessSpec, name: str = "spec") -> dict:
    """Exact pmf of a bounded, integer-valued i.i.d. spec as ``{value: prob}``."""
    if isinstance(spec, Constant):
        pmf = {spec.rate: 1.0}
    elif isinstance(spec, BernoulliBatch):
        pmf = {0.0: 1.0 - spec.prob}
        pmf[spec.batch] = pmf.get(spec.batch, 0.0) + spec.prob
    elif isinstance(spec, DiscreteUniform):
        pmf = {}
        for v in spec.support:
            pmf[v] = pmf.get(v, 0.0) + 1.0 / len(spec.support)
    else:
        raise UnsupportedSpecError(name, f"{spec.kind} is not a bounded i.i.d. spec")
    out = {}
    for v, p in pmf.items():
        if abs(v - round(v)) > INTEGER_TOL:
            raise UnsupportedSpecError(name, f"value {v} is not an integer")
        if p > 0:
            out[int(round(v))] = out.get(int(round(v)), 0.0) + p
    return out


def transition_matrix(arrival: ProcessSpec, departure: ProcessSpec, c_max: int) -> sparse.csr_matrix:
    """One-step transition matrix of the capped queue on levels ``0..c_max``."""
    pa = integer_pmf(arrival, "arrival")
    pr = integer_pmf(departure, "departure")
    net: dict = {}
    for a, p in pa.items():
        for r, s in pr.items():
            net[a - r] = net.get(a - r, 0.0) + p * s
    levels = np.arange(c_max + 1)
    rows, cols, vals = [], [], []
    for d, p in net.items():
        rows.append(levels)
        cols.append(np.clip(levels + d, 0, c_max))
        vals.append(np.full(c_max + 1, p))
    P = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(c_max + 1, c_max + 1))
    return P.tocsr()


def _closed_class(P: sparse.csr_matrix) -> np.ndarray:
    n_comp, labels = csgraph.connected_components(P > 0, directed=True, connection="strong")
    coo = P.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_comps = set(labels[coo.row[leaving]].tolist())
    closed = [c for c in range(n_comp) if c not in open_comps]
    if len(closed) != 1:
        raise UnsupportedSpecError("departure", f"chain has {len(closed)} closed classes; "
                                   "stationary distribution is not unique (deterministic queue?)")
    return np.flatnonzero(labels == closed[0])


def _period(P: sparse.csr_matrix, members: np.ndarray) -> int:
    sub = P[members][:, members].tocsr()
    depth = np.full(len(members), -1)
    depth[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in sub.indices[sub.indptr[u]:sub.indptr[u + 1]]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    nxt.append(v)
                else:
                    g = math.gcd(g, depth[u] + 1 - depth[v])
        frontier = nxt
    return g


def dtmc_stationary(arrival: ProcessSpec, departure: ProcessSpec, c_max: int,
                    tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Exact stationary distribution of the capped queue over levels ``0..c_max``.

    Power iteration from a state of the unique closed class. Convergence is
    declared when both the L1 change and the largest relative change of any
    non-negligible entry fall below ``tol``, so deep tail entries are resolved
    to relative accuracy rather than swamped by the bulk.
    """
    if not float(c_max).is_integer() or not 0 < c_max <= 10_000:
        raise UnsupportedSpecError("c_max", "oracle needs an integer cap in [1, 10^4]")
    c_max = int(c_max)
    P = transition_matrix(arrival, departure, c_max)
    members = _closed_class(P)
    period = _period(P, members)
    if period != 1:
        raise UnsupportedSpecError("departure", f"chain is periodic (period {period})")
    PT = P.T.tocsr()
    x = np.zeros(c_max + 1)
    x[members[0]] = 1.0
    for _ in range(max_iter):
        y = PT @ x
        y /= y.sum()
        big = y > 1e-280
        l1 = np.abs(y - x).sum()
        rel = np.max(np.abs(y[big] - x[big]) / y[big])
        x = y
        if l1 <= tol and rel <= tol:
            return x
    raise NumericError(f"oracle power iteration did not converge in {max_iter} iterations")
