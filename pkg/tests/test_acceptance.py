"""End-to-end acceptance checks, one test per criterion."""

import math
import time

import mpmath as mp
import numpy as np

from socialq.cli import load_config_text, run_experiment
from socialq.d2dsim import compare_schemes, reference_config
from socialq.effective import (ccdf_from_pmf, effective_bandwidth, effective_capacity, empirical_ccdf,
                               fit_decay_rate, solve_theta)
from socialq.processes import (BernoulliBatch, Constant, DiscreteUniform, MarkovModulated, Poisson,
                               derive_seed, rng_stream, sample_path)
from socialq.queueing import (QueueConfig, dtmc_stationary, inverse_transform, level_histogram,
                              simulate_queue, total_variation)
from socialq.social import (ReputationState, centrality_path, drain_slots, reputation_filter_path,
                            reputation_queue_update)

mp.mp.dps = 50


# --- 1 ----------------------------------------------------------------------

def test_closed_form_fixed_point(criterion):
    t0 = time.perf_counter()
    th = solve_theta(BernoulliBatch(1, 0.4), Constant(0.5)).theta
    elapsed = time.perf_counter() - t0
    # 0.6 + 0.4 e^t = e^(t/2) is a quadratic in e^(t/2) with roots 1 and 1.5
    exact = 2 * math.log(1.5)
    err = abs(th - exact)
    criterion(1, err <= 1e-6 and elapsed < 1.0, f"theta={th:.9f} exact={exact:.9f} err={err:.1e} time={elapsed:.3f}s")


# --- 2 ----------------------------------------------------------------------

TAIL_PAIRS = [
    (BernoulliBatch(1, 0.4), Constant(0.5)),
    (Poisson(0.8), Constant(1.0)),
    (BernoulliBatch(4, 0.2), DiscreteUniform((0.5, 1.5))),
    (Poisson(1.0), BernoulliBatch(3, 0.45)),
    (DiscreteUniform((0.0, 3.0)), Constant(2.0)),
    (Poisson(2.0), Constant(2.5)),
]
TAIL_REPS = 16
TAIL_SLOTS = 10_000_000


def merged_tail_fit(arrival, departure, theta, reps, n_slots, min_exceed, pair_index):
    levels = np.linspace(0.0, math.log(reps * n_slots) / theta, 201)
    total = None
    for r in range(reps):
        seed = derive_seed(pair_index, r)
        trace = simulate_queue(sample_path(arrival, n_slots, seed, 0), sample_path(departure, n_slots, seed, 1),
                               QueueConfig())
        c = empirical_ccdf(trace, levels)
        total = c if total is None else total.merge(c)
    return fit_decay_rate(total, min_exceed=min_exceed)


def test_simulated_tail_matches_theory(criterion):
    lines, ok = [], True
    for i, (arrival, departure) in enumerate(TAIL_PAIRS):
        t0 = time.perf_counter()
        th = solve_theta(arrival, departure).theta
        floor = 1000 if i == 0 else 5000
        fit = merged_tail_fit(arrival, departure, th, TAIL_REPS, TAIL_SLOTS, floor, i)
        elapsed = time.perf_counter() - t0
        rel = abs(fit.theta_hat - th) / th
        good = rel <= 0.05 and fit.r_squared >= 0.98 and elapsed < 60
        ok &= good
        lines.append(f"[{arrival}/{departure}: theta={th:.4f} fit={fit.theta_hat:.4f} rel={rel:.3f} "
                     f"r2={fit.r_squared:.4f} {elapsed:.1f}s]")
    criterion(2, ok, f"{len(TAIL_PAIRS)} pairs x {TAIL_REPS} runs x 1e7 slots " + " ".join(lines))


# --- 3 ----------------------------------------------------------------------

ORACLE_PAIRS = [
    (BernoulliBatch(2, 0.3), Constant(1.0), 200),
    (BernoulliBatch(3, 0.2), DiscreteUniform((0.0, 1.0, 2.0)), 150),
]


def oracle_chain(arrival, departure, c_max, levels_fn, seed):
    """TV distance of simulated levels to the exact chain, and the exact tail slope error over 20..100."""
    pi = dtmc_stationary(arrival, departure, c_max)
    hist = level_histogram(levels_fn(arrival, departure, c_max, seed))
    tv = total_variation(hist / hist.sum(), pi)
    ks = np.arange(20, 101)
    fit = fit_decay_rate(list(zip(ks, ccdf_from_pmf(pi, ks))), (20, 100))
    th = solve_theta(arrival, departure).theta
    return tv, abs(fit.theta_hat - th) / th, fit.theta_hat, th


def queue_levels(arrival, departure, c_max, seed):
    return simulate_queue(sample_path(arrival, TAIL_SLOTS + 100_000, seed, 0),
                          sample_path(departure, TAIL_SLOTS + 100_000, seed, 1),
                          QueueConfig(c_max, 0.0, 100_000))


def test_dtmc_oracle_equivalence(criterion):
    lines, ok = [], True
    for i, (a, d, c_max) in enumerate(ORACLE_PAIRS):
        tv, rel, slope, th = oracle_chain(a, d, c_max, queue_levels, 100 + i)
        ok &= tv < 0.01 and rel <= 0.02
        lines.append(f"[{a}/{d} cap={c_max}: TV={tv:.2e} slope={slope:.4f} theta={th:.4f} rel={rel:.4f}]")
    criterion(3, ok, " ".join(lines))


# --- 4 ----------------------------------------------------------------------

def mp_bb_eb(batch, p, theta):
    theta = mp.mpf(theta)
    return mp.log(1 - p + p * mp.exp(theta * batch)) / theta


def mp_du_ec(values, theta):
    theta = mp.mpf(theta)
    return -mp.log(mp.fsum(mp.exp(-theta * v) for v in values) / len(values)) / theta


def random_spec(rng):
    kind = rng.integers(5)
    if kind == 0:
        return Constant(float(rng.uniform(0, 10)))
    if kind == 1:
        return BernoulliBatch(float(rng.uniform(0, 10)), float(rng.uniform(0, 1)))
    if kind == 2:
        return DiscreteUniform(tuple(rng.uniform(0, 10, size=rng.integers(1, 7)).tolist()))
    if kind == 3:
        return Poisson(float(rng.uniform(0, 10)))
    n = int(rng.integers(2, 5))
    P = rng.uniform(0.05, 1.0, size=(n, n))
    return MarkovModulated((P / P.sum(axis=1, keepdims=True)).tolist(), rng.uniform(0, 10, size=n).tolist())


def test_effective_rate_numerics(criterion):
    spots = [
        (effective_bandwidth(BernoulliBatch(4, 0.5), 0.5), mp_bb_eb(4, mp.mpf("0.5"), "0.5"), 2.867562),
        # the quoted 1.566295 disagrees with its own formula in the fifth digit; the oracle is authoritative
        (effective_capacity(DiscreteUniform((1.0, 3.0)), 1.0), mp_du_ec([1, 3], 1), None),
    ]
    spot_err = max(abs(v - float(o)) for v, o, _ in spots)
    rounded = abs(spots[0][0] - spots[0][2]) <= 5e-7
    rng = rng_stream(4)
    violations = 0
    for _ in range(1000):
        spec = random_spec(rng)
        ts = np.sort(rng.uniform(1e-3, 20.0, size=20))
        eb = [effective_bandwidth(spec, t) for t in ts]
        ec = [effective_capacity(spec, t) for t in ts]
        violations += sum(b < a - 1e-12 * max(1, abs(a)) for a, b in zip(eb, eb[1:]))
        violations += sum(b > a + 1e-12 * max(1, abs(a)) for a, b in zip(ec, ec[1:]))
    ok = spot_err <= 1e-9 and rounded and violations == 0
    criterion(4, ok, f"spot values {spots[0][0]:.9f}, {spots[1][0]:.9f} max oracle err={spot_err:.1e}; "
                     f"monotonicity violations={violations} over 1000 specs x 20 thetas")


# --- 5 ----------------------------------------------------------------------

def test_inverse_queue_equivalence(criterion):
    rng = rng_stream(5)
    n = 1_000_000
    # dyadic grid: every subtraction below is exact in binary floating point
    c_max = rng.integers(1, 2**12, size=n) / 16.0
    c_th = np.floor(rng.uniform(0, 1, size=n) * c_max * 16) / 16.0
    q = np.floor(rng.uniform(0, 1, size=n) * (c_max * 16 + 1)) / 16.0
    low = q < c_th
    over = np.array([inverse_transform(qi, ci) for qi, ci in zip(q[:1000], c_max[:1000])])
    vec = np.maximum(c_max - q, 0.0)
    assert np.array_equal(over, vec[:1000])
    budget = vec > c_max - c_th
    mismatches = int(np.sum(low != budget))
    criterion(5, mismatches == 0, f"{n} triples, {int(low.sum())} outage events, mismatches={mismatches}")


# --- 6 ----------------------------------------------------------------------

def test_scheme_comparison(criterion):
    t0 = time.perf_counter()
    cmp = compare_schemes(reference_config())
    elapsed = time.perf_counter() - t0
    qos, ab = cmp.qos, cmp.absolute
    facts = cmp.facts()
    c_th = reference_config().account.c_th
    a = qos.outage_prob <= 1e-3 and qos.outage_upper <= 1.5e-3 and qos.credit_trace.stats.size >= 10**7 - 10**6
    b = qos.tail_fit is not None and qos.tail_fit.r_squared >= 0.98
    c = ab.min_credit == c_th and ab.throughput < qos.throughput
    d = facts["wf_violates_outage"] or facts["wf_lower_credit_at_equal_throughput"]
    ok = a and b and c and d and elapsed < 300
    criterion(6, ok,
              f"(a) outage={qos.outage_prob:.2e} wilson={qos.outage_upper:.2e} "
              f"(b) r2={qos.tail_fit.r_squared if qos.tail_fit else float('nan'):.4f} "
              f"(c) abs_min={ab.min_credit} thr abs/qos={ab.throughput:.4f}/{qos.throughput:.4f} "
              f"(d) wf_outage={cmp.wf.outage_prob:.2e} violates={facts['wf_violates_outage']} "
              f"lower_at_equal_thr={facts['wf_lower_credit_at_equal_throughput']} time={elapsed:.1f}s")


# --- 7 ----------------------------------------------------------------------

def reputation_levels(gain, spend, r_max, seed):
    """Queue-mode reputation: the vectorised path, checked step by step against the state update."""
    n = TAIL_SLOTS + 100_000
    g, s = sample_path(gain, n, seed, 0), sample_path(spend, n, seed, 1)
    trace = simulate_queue(g, s, QueueConfig(r_max, 0.0, 100_000))
    state = ReputationState("queue", 0.0, r_max=r_max)
    for t in range(20_000):
        state = reputation_queue_update(state, float(g.values[t]), float(s.values[t]))
        assert state.value == trace.levels[t]
    return trace


def test_reputation(criterion):
    rng = rng_stream(7)
    worst = 0.0
    for _ in range(200):
        lam, g, v0 = float(rng.uniform(0.05, 0.99)), float(rng.uniform(0, 10)), float(rng.uniform(0, 10))
        path = reputation_filter_path(np.full(200, g), lam, v0)
        expected = lam ** np.arange(1, 201) * abs(v0 - g)
        worst = max(worst, float(np.max(np.abs(np.abs(path - g) - expected))))
    tv, rel, slope, th = oracle_chain(BernoulliBatch(2, 0.3), Constant(1.0), 200, reputation_levels, 700)
    ok = worst <= 1e-12 and tv < 0.01 and rel <= 0.02
    criterion(7, ok, f"filter max step error={worst:.1e}; queue mode TV={tv:.2e} "
                     f"oracle slope={slope:.4f} theta={th:.4f} rel={rel:.4f}")


# --- 8 ----------------------------------------------------------------------

def test_centrality(criterion):
    rng = rng_stream(8)
    drain_bad = 0
    for _ in range(2000):
        # dyadic level and rate, so repeated subtraction is exact
        level = int(rng.integers(0, 2**10)) / 8.0
        mu = int(rng.integers(1, 64)) / 16.0
        drain_bad += drain_slots(level, mu) != math.ceil(level / mu)
    stop_bad = 0
    for i in range(100):
        inc = rng.integers(0, 5, size=400) / 4.0
        inc[200:] = 0.0
        path = centrality_path(inc, 0.75)
        level = path[199]
        zero_at = int(np.argmax(path[200:] == 0.0)) + 1 if level > 0 else 0
        stop_bad += zero_at != math.ceil(level / 0.75) or np.any(path[200 + zero_at:] != 0)
    dom_bad = 0
    for i in range(100):
        inc = rng_stream(derive_seed(800, i)).exponential(1.0, size=2000) * rng.integers(0, 2, size=2000)
        mu = float(rng.uniform(0.1, 1.0))
        mu_alt = mu + float(rng.uniform(0.01, 1.0))
        dom_bad += int(np.sum(centrality_path(inc, mu_alt) > centrality_path(inc, mu)))
    ok = drain_bad == 0 and stop_bad == 0 and dom_bad == 0
    criterion(8, ok, f"drain mismatches={drain_bad}/2000 stopped-arrival mismatches={stop_bad}/100 "
                     f"dominance violations={dom_bad} over 100 traces")


# --- 9 ----------------------------------------------------------------------

SMALL = {
    "tail-verify": "min_exceed: 10\n",
    "oracle-compare": "queue: {c_max: 50, warmup_slots: 1000}\n"
                      "arrival: {kind: bernoulli_batch, batch: 2, prob: 0.3}\n"
                      "departure: {kind: constant, rate: 1}\n",
    "credit-scenario": "scenario: {warmup_slots: 1000, trace_slots: 50, wf_samples: 4096}\n",
    "reputation": "min_exceed: 10\nreputation: {trace_slots: 50}\n",
    "centrality": "min_exceed: 10\nfit_range: [1, 8]\ncentrality: {n_traces: 5, trace_slots: 100}\n",
    "sweep": "min_exceed: 10\nfit_range: [2, 15]\n"
             "sweep: {experiment: tail-verify, axes: {departure.rate: [0.5, 0.55]}}\n",
}


def test_determinism(criterion, tmp_path):
    bad = []
    for name, extra in SMALL.items():
        digests = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 2)):
            text = (f"experiment: {name}\noutput_dir: {tmp_path / name / tag}\nreplications: 2\n"
                    f"threads: {threads}\nn_slots: 100000\nqueue: {{warmup_slots: 1000}}\n" + extra)
            m = run_experiment(load_config_text(text))
            assert m.status == "ok", (name, m.error)
            digests.append(m.outputs)
        if not (digests[0] == digests[1] == digests[2] and digests[0]):
            bad.append(name)
    criterion(9, not bad, f"{len(SMALL)} experiments x (rerun, 2 threads): "
                          f"{'identical checksums' if not bad else 'differ: ' + ', '.join(bad)}")
