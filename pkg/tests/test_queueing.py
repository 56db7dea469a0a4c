import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from socialq.effective import ccdf_from_pmf, fit_decay_rate, solve_theta
from socialq.errors import UnsupportedSpecError, ValidationError
from socialq.processes import BernoulliBatch, Constant, DiscreteUniform, Poisson, sample_path
from socialq.queueing import (QueueConfig, dtmc_stationary, inverse_transform, level_histogram, simulate_queue,
                              step_queue, total_variation, transition_matrix)


def gth_stationary(P):
    """Grassmann-Taksar-Heyman elimination: subtraction-free stationary vector."""
    P = np.array(P, dtype=float)
    n = len(P)
    for k in range(n - 1, 0, -1):
        s = P[k, :k].sum()
        P[:k, k] /= s
        P[:k, :k] += np.outer(P[:k, k], P[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ P[:k, k]
    return pi / pi.sum()


@pytest.mark.parametrize("q, a, r, c_max, out", [(5, 3, 4, 10, 4), (0, 0, 5, 10, 0), (9, 5, 1, 10, 10)])
def test_step_queue(q, a, r, c_max, out):
    assert step_queue(q, a, r, c_max) == out


def test_no_flow_keeps_level():
    z = np.zeros(50)
    tr = simulate_queue(z, z, QueueConfig(c_max=math.inf, q0=7, warmup_slots=0))
    assert np.all(tr.levels == 7)


def test_deterministic_drain():
    n = 200
    tr = simulate_queue(np.full(n, 2.0), np.full(n, 3.0), QueueConfig(q0=100, warmup_slots=0))
    expected = np.maximum(100 - np.arange(1, n + 1), 0)
    assert np.array_equal(tr.levels, expected)


def test_length_mismatch_rejected():
    with pytest.raises(ValidationError, match="departure"):
        simulate_queue(np.zeros(10), np.zeros(11), QueueConfig(warmup_slots=0))


def test_queue_config_defaults_and_validation():
    assert QueueConfig(c_max=100).q0 == 50
    assert QueueConfig().q0 == 0
    with pytest.raises(ValidationError) as err:
        QueueConfig(c_max=10, q0=11)
    assert err.value.field == "q0"


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=200),
       st.floats(1, 50), st.floats(0, 1))
def test_trace_obeys_recursion_and_bounds(pairs, c_max, frac):
    a = np.array([p[0] for p in pairs])
    r = np.array([p[1] for p in pairs])
    cfg = QueueConfig(c_max=c_max, q0=frac * c_max, warmup_slots=0)
    tr = simulate_queue(a, r, cfg)
    assert np.all((tr.levels >= 0) & (tr.levels <= c_max))
    q = cfg.q0
    for t in range(len(a)):
        q = step_queue(q, a[t], r[t], c_max)
        assert tr.levels[t] == q


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5)), min_size=1, max_size=200),
       st.floats(1, 50))
def test_larger_arrivals_give_larger_queue(rows, c_max):
    a = np.array([x[0] for x in rows])
    r = np.array([x[1] for x in rows])
    extra = np.array([x[2] for x in rows])
    cfg = QueueConfig(c_max=c_max, warmup_slots=0)
    lo = simulate_queue(a, r, cfg).levels
    hi = simulate_queue(a + extra, r, cfg).levels
    assert np.all(hi >= lo)


@pytest.mark.parametrize("q, out", [(30, 70), (100, 0), (0, 100)])
def test_inverse_transform(q, out):
    assert inverse_transform(q, 100) == out


def test_inverse_needs_finite_cap():
    with pytest.raises(ValidationError):
        inverse_transform(3.0, math.inf)


dyadic = st.integers(0, 2**40).map(lambda k: k / 2**20)


@given(dyadic, dyadic, dyadic)
def test_event_identity_exact_on_dyadic_values(q, c_th, c_max):
    # subtraction of 2^-20-grid values below 2^20 is exact in double precision
    c_max = max(c_max, c_th + 2**-20)
    q = min(q, c_max)
    assert (q < c_th) == (inverse_transform(q, c_max) > c_max - c_th)


@given(st.floats(1e-3, 1e6), st.floats(0, 1), st.floats(0, 1))
def test_event_identity_general_floats_differ_only_at_threshold(c_max, qf, tf):
    q, c_th = qf * c_max, tf * c_max
    if c_th >= c_max:
        return
    if (q < c_th) != (inverse_transform(q, c_max) > c_max - c_th):
        assert abs(q - c_th) <= 4 * np.finfo(float).eps * c_max


def test_trace_csv(tmp_path):
    tr = simulate_queue(np.ones(5), np.zeros(5), QueueConfig(c_max=3, q0=0, warmup_slots=0))
    tr.to_csv(tmp_path / "q.csv")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "slot,level"
    assert lines[1:] == ["1,1.0", "2,2.0", "3,3.0", "4,3.0", "5,3.0"]


def test_transition_matrix_is_stochastic():
    P = transition_matrix(BernoulliBatch(2, 0.3), DiscreteUniform((0, 1, 3)), 40)
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-15)


@pytest.mark.parametrize("arrival, departure, c_max", [
    (BernoulliBatch(2, 0.3), Constant(1), 60),
    (DiscreteUniform((0, 1, 2, 5)), BernoulliBatch(3, 0.8), 50),
    (BernoulliBatch(1, 0.4), DiscreteUniform((0, 1)), 30),
])
def test_dtmc_matches_gth_oracle(arrival, departure, c_max):
    pi = dtmc_stationary(arrival, departure, c_max)
    oracle = gth_stationary(transition_matrix(arrival, departure, c_max).toarray())
    assert pi.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(pi, oracle, rtol=1e-8, atol=1e-15)


def test_dtmc_pure_drain_point_mass():
    pi = dtmc_stationary(Constant(0), Constant(1), 20)
    assert pi[0] == pytest.approx(1.0)
    assert pi[1:].sum() == pytest.approx(0.0, abs=1e-15)


def test_dtmc_rejects_degenerate_and_unsupported():
    with pytest.raises(UnsupportedSpecError, match="closed classes"):
        dtmc_stationary(Constant(1), Constant(1), 20)
    with pytest.raises(UnsupportedSpecError):
        dtmc_stationary(Poisson(1), Constant(2), 20)
    with pytest.raises(UnsupportedSpecError):
        dtmc_stationary(BernoulliBatch(1.5, 0.3), Constant(1), 20)


def test_period_detection():
    from scipy import sparse
    from socialq.queueing import _period
    cycle = sparse.csr_matrix(np.roll(np.eye(4), 1, axis=1))
    assert _period(cycle, np.arange(4)) == 4
    lazy = sparse.csr_matrix(0.5 * np.eye(4) + 0.5 * np.roll(np.eye(4), 1, axis=1))
    assert _period(lazy, np.arange(4)) == 1


def test_dtmc_tail_slope_matches_theta():
    pi = dtmc_stationary(BernoulliBatch(2, 0.3), Constant(1), 200)
    ks = np.arange(20, 101)
    fit = fit_decay_rate(list(zip(ks, ccdf_from_pmf(pi, ks))), (20, 100))
    theta = solve_theta(BernoulliBatch(2, 0.3), Constant(1)).theta
    assert theta == pytest.approx(math.log(7 / 3), rel=1e-9)
    assert fit.theta_hat == pytest.approx(theta, rel=0.02)


def test_histogram_close_to_oracle():
    arrival, departure, c_max = BernoulliBatch(2, 0.3), Constant(1), 200
    n = 2 * 10**6
    tr = simulate_queue(sample_path(arrival, n, 1), sample_path(departure, n, 1, 1), QueueConfig(c_max=c_max))
    h = level_histogram(tr)
    assert total_variation(h / h.sum(), dtmc_stationary(arrival, departure, c_max)) < 0.01


def test_histogram_requires_integer_levels():
    tr = simulate_queue(np.full(10, 0.5), np.zeros(10), QueueConfig(c_max=100, q0=0, warmup_slots=0))
    with pytest.raises(UnsupportedSpecError):
        level_histogram(tr)


def test_total_variation_pads():
    assert total_variation([1.0], [0.5, 0.5]) == pytest.approx(0.5)
