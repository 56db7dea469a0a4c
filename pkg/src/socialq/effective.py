"""Effective bandwidth/capacity, the QoS-exponent fixed point and tail estimation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FitError, NoFiniteRootError, StabilityError, ValidationError
from .processes import ProcessSpec, is_deterministic, mean_rate, scaled_log_mgf

THETA_START = 1e-6
THETA_LIMIT = 1e6
ROOT_RTOL = 1e-9
MIN_EXCEEDANCES = 50
HEAD_LEVEL = 10.0


def effective_bandwidth(spec: ProcessSpec, theta: float) -> float:
    """Smallest constant service rate keeping the queue tail decaying at ``theta``."""
    if not theta > 0:
        raise ValidationError("theta", "must be > 0")
    return scaled_log_mgf(spec, theta)


def effective_capacity(spec: ProcessSpec, theta: float) -> float:
    """Largest constant arrival rate the service process supports at decay rate ``theta``."""
    if not theta > 0:
        raise ValidationError("theta", "must be > 0")
    return scaled_log_mgf(spec, -theta)


@dataclass(frozen=True)
class QoSExponent:
    theta: float
    kind: str = "finite"

    def __post_init__(self):
        if self.kind not in ("finite", "deterministic-infinite"):
            raise ValidationError("kind", f"unknown kind {self.kind!r}")
        if self.kind == "finite" and not self.theta > 0:
            raise ValidationError("theta", "finite exponent must be > 0")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @classmethod
    def infinite(cls) -> "QoSExponent":
        return cls(math.inf, "deterministic-infinite")


def _gap(arrival: ProcessSpec, departure: ProcessSpec, theta: float) -> float:
    return effective_bandwidth(arrival, theta) - effective_capacity(departure, theta)


def solve_theta(arrival: ProcessSpec, departure: ProcessSpec) -> QoSExponent:
    """Decay rate ``theta*`` where effective bandwidth meets effective capacity.

    Brackets by doubling from ``1e-6`` and then bisects. Two constant
    processes give a queue that never builds up; that case is reported as
    ``deterministic-infinite`` rather than solved.
    """
    ma, md = mean_rate(arrival), mean_rate(departure)
    if not ma < md:
        raise StabilityError(f"mean arrival {ma:.6g} must be below mean departure {md:.6g}")
    if is_deterministic(arrival) and is_deterministic(departure):
        return QoSExponent.infinite()
    lo = hi = THETA_START
    while _gap(arrival, departure, hi) < 0:
        lo = hi
        hi *= 2
        if hi > THETA_LIMIT:
            raise NoFiniteRootError(f"effective bandwidth stays below effective capacity up to theta={THETA_LIMIT:g}; "
                                    "tail decays faster than any exponential probed")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        eb = effective_bandwidth(arrival, mid)
        g = eb - effective_capacity(departure, mid)
        if abs(g) <= ROOT_RTOL * max(1.0, abs(eb)) and hi - lo <= 1e-12 * mid:
            return QoSExponent(mid)
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * mid:
            break
    mid = 0.5 * (lo + hi)
    eb = effective_bandwidth(arrival, mid)
    if abs(eb - effective_capacity(departure, mid)) > ROOT_RTOL * max(1.0, abs(eb)):
        raise NoFiniteRootError(f"bisection stalled at theta={mid:.17g}")
    return QoSExponent(mid)


def predicted_tail(theta: QoSExponent, x: float) -> float:
    """Asymptotic ``Pr{Q > x} ~ exp(-theta x)`` with unit prefactor."""
    if x < 0:
        raise ValidationError("x", "must be >= 0")
    if not theta.is_finite:
        return 0.0 if x > 0 else 1.0
    return math.exp(-theta.theta * x)


def target_theta(c_max: float, c_th: float, delta: float) -> QoSExponent:
    """Smallest budget-queue decay rate meeting ``Pr{budget > c_max - c_th} <= delta``."""
    if not 0 <= c_th < c_max:
        raise ValidationError("c_th", f"need 0 <= c_th < c_max, got c_th={c_th}, c_max={c_max}")
    if not 0 < delta < 1:
        raise ValidationError("delta", f"must lie in (0, 1), got {delta}")
    return QoSExponent(math.log(1.0 / delta) / (c_max - c_th))


# ---------------------------------------------------------------------------
# Empirical tails
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ccdf:
    """``Pr{Q > level}`` on a grid, with the raw exceedance counts behind it."""

    levels: np.ndarray
    exceed: np.ndarray
    n_samples: int

    @property
    def probs(self) -> np.ndarray:
        return self.exceed / self.n_samples

    def merge(self, other: "Ccdf") -> "Ccdf":
        if not np.array_equal(self.levels, other.levels):
            raise ValidationError("levels", "cannot merge CCDFs on different grids")
        return Ccdf(self.levels, self.exceed + other.exceed, self.n_samples + other.n_samples)

    def pairs(self):
        return list(zip(self.levels.tolist(), self.probs.tolist()))

    def to_csv(self, path, predicted: Optional[QoSExponent] = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["level", "ccdf", "log_ccdf"] + (["predicted"] if predicted else [])
            w.writerow(header)
            for lv, p in zip(self.levels, self.probs):
                row = [repr(float(lv)), repr(float(p)), repr(math.log(p)) if p > 0 else "-inf"]
                if predicted:
                    row.append(repr(predicted_tail(predicted, float(lv))))
                w.writerow(row)


def default_grid(values: np.ndarray, n_levels: int = 200) -> np.ndarray:
    top = float(np.percentile(values, 99.999))
    return np.linspace(0.0, top, n_levels)


def empirical_ccdf(values, levels: Optional[np.ndarray] = None) -> Ccdf:
    """Exceedance counts of ``values`` (or a trace's post-warmup levels) on a grid."""
    if hasattr(values, "stats"):
        values = values.stats
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("trace", "no samples to estimate a CCDF from")
    if levels is None:
        levels = default_grid(values)
    levels = np.asarray(levels, dtype=float)
    ordered = np.sort(values)
    exceed = values.size - np.searchsorted(ordered, levels, side="right")
    return Ccdf(levels, exceed.astype(np.int64), int(values.size))


def ccdf_from_pmf(pmf: np.ndarray, levels: Optional[Sequence[float]] = None) -> np.ndarray:
    """Exact ``Pr{Q > k}`` for integer levels from a pmf over ``0..len-1``."""
    tail = np.concatenate([np.cumsum(pmf[::-1])[::-1][1:], [0.0]])
    if levels is None:
        return tail
    return tail[np.asarray(levels, dtype=int)]


@dataclass(frozen=True)
class TailFit:
    theta_hat: float
    intercept: float
    r_squared: float
    fit_range: Tuple[float, float]
    n_points: int

    def as_record(self) -> dict:
        return {"theta_hat": self.theta_hat, "intercept": self.intercept, "r_squared": self.r_squared,
                "fit_range": list(self.fit_range), "n_points": self.n_points}


def fit_decay_rate(ccdf: Union[Ccdf, Sequence[Tuple[float, float]]],
                   fit_range: Optional[Tuple[float, float]] = None,
                   min_exceed: int = MIN_EXCEEDANCES) -> TailFit:
    """Least-squares line through ``log Pr{Q > q}`` over ``fit_range``.

    With a :class:`Ccdf`, grid points backed by fewer than ``min_exceed``
    exceedances are dropped; bare ``(level, prob)`` pairs are taken as exact.
    The default range starts at level 10 and runs to the last usable point.
    """
    if isinstance(ccdf, Ccdf):
        levels, probs = ccdf.levels, ccdf.probs
        usable = ccdf.exceed >= min_exceed
    else:
        arr = np.asarray(ccdf, dtype=float).reshape(-1, 2)
        levels, probs = arr[:, 0], arr[:, 1]
        usable = np.ones(len(levels), bool)
    usable &= probs > 0
    lo, hi = fit_range if fit_range is not None else (HEAD_LEVEL, math.inf)
    mask = usable & (levels >= lo) & (levels <= hi)
    n = int(mask.sum())
    if n < 5:
        raise FitError(f"only {n} usable grid points in [{lo}, {hi}] (need 5, each with >= {min_exceed} exceedances)")
    x, y = levels[mask], np.log(probs[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return TailFit(float(-slope), float(intercept), max(0.0, r2), (float(x.min()), float(x.max())), n)
