"""Stationary slotted processes: specs, seeded samplers and log-moment statistics.

Every queue in the package is driven by per-slot increments drawn from one of
the spec classes below. Specs are frozen dataclasses; they validate on
construction and serialize to a tagged record ``{"kind": ..., **params}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse, special, stats
from scipy.sparse import csgraph

from . import _kernels
from .errors import NumericError, ValidationError

TAYLOR_THETA = 1e-6
ROW_SUM_TOL = 1e-12


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------

def seed_sequence(seed: int, stream: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream),))


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for the independent stream ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, stream)))


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for replication ``index``; independent of worker count."""
    return int(seed_sequence(master_seed, 10_000 + index).generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

def _check_nonneg(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(name, f"must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True)
class Constant:
    rate: float
    kind: ClassVar[str] = "constant"

    def __post_init__(self):
        object.__setattr__(self, "rate", _check_nonneg("rate", self.rate))


@dataclass(frozen=True)
class BernoulliBatch:
    """A batch of ``batch`` units arrives with probability ``prob`` each slot."""

    batch: float
    prob: float
    kind: ClassVar[str] = "bernoulli_batch"

    def __post_init__(self):
        object.__setattr__(self, "batch", _check_nonneg("batch", self.batch))
        p = float(self.prob)
        if not 0.0 <= p <= 1.0:
            raise ValidationError("prob", f"must lie in [0, 1], got {p!r}")
        object.__setattr__(self, "prob", p)


@dataclass(frozen=True)
class DiscreteUniform:
    support: tuple
    kind: ClassVar[str] = "discrete_uniform"

    def __post_init__(self):
        if len(self.support) == 0:
            raise ValidationError("support", "must be non-empty")
        values = tuple(_check_nonneg(f"support[{i}]", v) for i, v in enumerate(self.support))
        object.__setattr__(self, "support", values)


@dataclass(frozen=True)
class Poisson:
    mean: float
    kind: ClassVar[str] = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "mean", _check_nonneg("mean", self.mean))


@dataclass(frozen=True)
class MarkovModulated:
    """Rate ``rate_per_state[s]`` while a finite Markov chain sits in state ``s``.

    The chain must be irreducible. A chain with an explicit ``initial_state``
    is only required to be stochastic: it is sampled along whatever class the
    start state reaches, but stationary statistics still demand irreducibility.
    """

    transition: tuple
    rate_per_state: tuple
    initial_state: Optional[int] = None
    kind: ClassVar[str] = "markov_modulated"

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        n = len(self.rate_per_state)
        if P.ndim != 2 or P.shape != (n, n) or n == 0:
            raise ValidationError("transition", f"must be a square {n}x{n} matrix matching rate_per_state")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValidationError("transition", "entries must be finite and >= 0")
        bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValidationError(f"transition[{bad[0]}]", "row does not sum to 1")
        rates = tuple(_check_nonneg(f"rate_per_state[{i}]", r) for i, r in enumerate(self.rate_per_state))
        object.__setattr__(self, "transition", tuple(tuple(float(x) for x in row) for row in P))
        object.__setattr__(self, "rate_per_state", rates)
        if self.initial_state is not None:
            s0 = int(self.initial_state)
            if not 0 <= s0 < n:
                raise ValidationError("initial_state", f"must be in [0, {n}), got {s0}")
            object.__setattr__(self, "initial_state", s0)
        elif not is_irreducible(P):
            raise ValidationError("transition", "Markov chain is reducible")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.transition, dtype=float)

    @property
    def rates(self) -> np.ndarray:
        return np.array(self.rate_per_state, dtype=float)


ProcessSpec = Union[Constant, BernoulliBatch, DiscreteUniform, Poisson, MarkovModulated]
SPEC_KINDS = {cls.kind: cls for cls in (Constant, BernoulliBatch, DiscreteUniform, Poisson, MarkovModulated)}


def is_irreducible(P: np.ndarray) -> bool:
    n_comp, _ = csgraph.connected_components(sparse.csr_matrix(np.asarray(P) > 0), directed=True,
                                             connection="strong")
    return n_comp == 1


def ar1_markov(mean: float, phi: float, sigma: float, n_states: int = 32, span: float = 4.0) -> MarkovModulated:
    """Discretize ``x[t+1] = mean + phi (x[t] - mean) + N(0, sigma^2)`` (Tauchen grid).

    The grid covers ``mean +- span`` stationary standard deviations, so
    ``mean`` must be at least ``span`` deviations above zero.
    """
    if not -1.0 < phi < 1.0:
        raise ValidationError("phi", "must lie in (-1, 1)")
    if sigma <= 0:
        raise ValidationError("sigma", "must be > 0")
    if n_states < 2:
        raise ValidationError("n_states", "need at least 2 states")
    sd = sigma / math.sqrt(1.0 - phi * phi)
    if mean - span * sd < 0:
        raise ValidationError("mean", f"grid would go negative: need mean >= {span * sd:.6g}")
    grid = np.linspace(-span * sd, span * sd, n_states)
    half = (grid[1] - grid[0]) / 2
    edges = (grid[None, :] - phi * grid[:, None]) / sigma
    P = np.empty((n_states, n_states))
    cdf_hi = stats.norm.cdf(edges + half / sigma)
    cdf_lo = stats.norm.cdf(edges - half / sigma)
    P[:, 1:-1] = cdf_hi[:, 1:-1] - cdf_lo[:, 1:-1]
    P[:, 0] = cdf_hi[:, 0]
    P[:, -1] = stats.norm.sf(edges[:, -1] - half / sigma)
    P /= P.sum(axis=1, keepdims=True)
    return MarkovModulated(transition=P.tolist(), rate_per_state=(mean + grid).tolist())


def spec_from_dict(data: Mapping[str, Any]) -> ProcessSpec:
    """Build a spec from its tagged record; ``kind: ar1`` expands to a Markov grid."""
    params = dict(data)
    kind = params.pop("kind", None)
    if kind == "ar1":
        return ar1_markov(**params)
    if kind not in SPEC_KINDS:
        raise ValidationError("kind", f"unknown process kind {kind!r}")
    try:
        return SPEC_KINDS[kind](**params)
    except TypeError as exc:
        raise ValidationError("kind", f"bad parameters for {kind}: {exc}") from None


def spec_to_dict(spec: ProcessSpec) -> dict:
    out: dict = {"kind": spec.kind}
    if isinstance(spec, Constant):
        out["rate"] = spec.rate
    elif isinstance(spec, BernoulliBatch):
        out.update(batch=spec.batch, prob=spec.prob)
    elif isinstance(spec, DiscreteUniform):
        out["support"] = list(spec.support)
    elif isinstance(spec, Poisson):
        out["mean"] = spec.mean
    else:
        out["transition"] = [list(r) for r in spec.transition]
        out["rate_per_state"] = list(spec.rate_per_state)
        if spec.initial_state is not None:
            out["initial_state"] = spec.initial_state
    return out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trace:
    values: np.ndarray = field(repr=False)
    seed: int
    spec: ProcessSpec

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self):
        return len(self.values)


def draw(spec: ProcessSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` increments from ``rng``. Successive calls continue the stream."""
    if isinstance(spec, Constant):
        return np.full(n, spec.rate)
    if isinstance(spec, BernoulliBatch):
        return np.where(rng.random(n) < spec.prob, spec.batch, 0.0)
    if isinstance(spec, DiscreteUniform):
        support = np.asarray(spec.support)
        return support[rng.integers(0, len(support), n)]
    if isinstance(spec, Poisson):
        return rng.poisson(spec.mean, n).astype(float)
    P = spec.matrix
    if spec.initial_state is None:
        s0 = int(rng.choice(len(P), p=stationary_distribution(P)))
    else:
        s0 = spec.initial_state
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    states = _kernels.markov_walk(cum, rng.random(n), s0)
    return spec.rates[states]


def sample_path(spec: ProcessSpec, n_slots: int, seed: int, stream: int = 0) -> Trace:
    if n_slots < 1:
        raise ValidationError("n_slots", "must be >= 1")
    return Trace(draw(spec, int(n_slots), rng_stream(seed, stream)), int(seed), spec)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible stochastic matrix (direct solve)."""
    P = np.asarray(P, dtype=float)
    n = len(P)
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _require_irreducible(spec: MarkovModulated) -> None:
    if spec.initial_state is not None and not is_irreducible(spec.matrix):
        raise ValidationError("transition", "stationary statistics need an irreducible chain")


def mean_rate(spec: ProcessSpec) -> float:
    if isinstance(spec, Constant):
        return spec.rate
    if isinstance(spec, BernoulliBatch):
        return spec.batch * spec.prob
    if isinstance(spec, DiscreteUniform):
        return float(np.mean(spec.support))
    if isinstance(spec, Poisson):
        return spec.mean
    _require_irreducible(spec)
    return float(stationary_distribution(spec.matrix) @ spec.rates)


def variance_rate(spec: ProcessSpec) -> float:
    """Asymptotic variance rate, i.e. the curvature of the log-MGF at zero.

    For i.i.d. kinds this is the per-slot variance; for Markov-modulated
    specs the lagged covariances are summed through the fundamental matrix.
    """
    if isinstance(spec, Constant):
        return 0.0
    if isinstance(spec, BernoulliBatch):
        return spec.batch ** 2 * spec.prob * (1 - spec.prob)
    if isinstance(spec, DiscreteUniform):
        return float(np.var(spec.support))
    if isinstance(spec, Poisson):
        return spec.mean
    _require_irreducible(spec)
    P = spec.matrix
    pi = stationary_distribution(P)
    r = spec.rates - pi @ spec.rates
    Z = np.linalg.inv(np.eye(len(P)) - P + np.outer(np.ones(len(P)), pi))
    return float(np.sum(pi * r * (2 * (Z @ r) - r)))


def peak_rate(spec: ProcessSpec) -> float:
    """Largest per-slot value (``inf`` for Poisson)."""
    if isinstance(spec, Constant):
        return spec.rate
    if isinstance(spec, BernoulliBatch):
        return spec.batch if spec.prob > 0 else 0.0
    if isinstance(spec, DiscreteUniform):
        return max(spec.support)
    if isinstance(spec, Poisson):
        return math.inf if spec.mean > 0 else 0.0
    return max(spec.rate_per_state)


def floor_rate(spec: ProcessSpec) -> float:
    """Smallest per-slot value."""
    if isinstance(spec, Constant):
        return spec.rate
    if isinstance(spec, BernoulliBatch):
        return spec.batch if spec.prob == 1 else 0.0
    if isinstance(spec, DiscreteUniform):
        return min(spec.support)
    if isinstance(spec, Poisson):
        return 0.0
    return min(spec.rate_per_state)


def is_deterministic(spec: ProcessSpec) -> bool:
    return floor_rate(spec) == peak_rate(spec)


def spectral_radius(M: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Perron root of a nonnegative irreducible matrix by power iteration.

    Iterates on ``M + c I`` with ``c`` the smallest row sum (a lower bound on
    the root), which makes the matrix primitive without swamping small roots.
    Stops when the Collatz-Wielandt bounds agree to ``tol`` relative.
    """
    M = np.asarray(M, dtype=float)
    c = float(M.sum(axis=1).min())
    A = M + c * np.eye(len(M))
    v = np.full(len(M), 1.0 / len(M))
    for _ in range(max_iter):
        w = A @ v
        ratios = w / v
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * lo:
            return 0.5 * (lo + hi) - c
        v = w / w.sum()
    raise NumericError(f"power iteration did not converge in {max_iter} iterations")


def _log_mgf_exact(spec: ProcessSpec, theta: float) -> float:
    if isinstance(spec, Constant):
        return theta * spec.rate
    if isinstance(spec, BernoulliBatch):
        b, p = spec.batch, spec.prob
        if p == 0.0:
            return 0.0
        if p == 1.0:
            return theta * b
        x = theta * b
        if x > 0:
            return x + math.log(p + (1 - p) * math.exp(-x))
        return math.log1p(p * math.expm1(x))
    if isinstance(spec, DiscreteUniform):
        return float(special.logsumexp(theta * np.asarray(spec.support)) - math.log(len(spec.support)))
    if isinstance(spec, Poisson):
        with np.errstate(over="ignore"):
            return float(spec.mean * np.expm1(theta))
    _require_irreducible(spec)
    r = spec.rates
    shift = r.max() if theta > 0 else r.min()
    M = spec.matrix * np.exp(theta * (r - shift))[None, :]
    return theta * shift + math.log(spectral_radius(M))


def log_mgf(spec: ProcessSpec, theta: float) -> float:
    """Per-slot asymptotic log-MGF ``lim (1/t) log E exp(theta * sum of t increments)``."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValidationError("theta", "must be finite")
    if abs(theta) < TAYLOR_THETA:
        return theta * (mean_rate(spec) + 0.5 * theta * variance_rate(spec))
    return _log_mgf_exact(spec, theta)


def scaled_log_mgf(spec: ProcessSpec, theta: float) -> float:
    """``log_mgf(spec, theta) / theta`` with the removable singularity at 0 filled."""
    theta = float(theta)
    if theta == 0.0:
        return mean_rate(spec)
    if abs(theta) < TAYLOR_THETA:
        return mean_rate(spec) + 0.5 * theta * variance_rate(spec)
    return _log_mgf_exact(spec, theta) / theta
