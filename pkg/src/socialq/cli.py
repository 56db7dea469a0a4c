"""Experiment runner: strict YAML configs, named experiments, CSV outputs and run manifests.

Every experiment writes its data files plus ``manifest.json`` into the output
directory. Data files depend only on the config and master seed; replications
may run in worker processes but are merged and written by the parent, in
replication order.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import enum
import hashlib
import inspect
import itertools
import json
import math
import multiprocessing as mp
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field
from scipy import signal

from . import __version__
from .d2dsim import ChannelConfig, ScenarioConfig, compare_schemes
from .effective import (HEAD_LEVEL, Ccdf, ccdf_from_pmf, empirical_ccdf, fit_decay_rate, predicted_tail,
                        solve_theta)
from .errors import ConfigParseError, SocialQError, UnknownFieldError, ValidationError
from .processes import SPEC_KINDS, Constant, ar1_markov, derive_seed, mean_rate, sample_path, spec_from_dict
from .queueing import QueueConfig, dtmc_stationary, level_histogram, simulate_queue, total_variation
from .social import (CentralityState, CreditAccount, LoanPolicy, ReputationState, centrality_path, drain_slots,
                     loan_limit)

EXPERIMENTS = {
    "tail-verify": "uncapped-queue CCDF against the analytic decay rate",
    "oracle-compare": "capped integer queue histogram against the exact Markov-chain stationary law",
    "credit-scenario": "three-scheme D2D relay comparison on the buyer's credit account",
    "reputation": "filter or queue reputation driving a loan-shifted credit outage",
    "centrality": "centrality drain and coupled departure-rate dominance",
    "sweep": "cartesian sweep of another experiment over config axes",
}
FULL_SLOTS = 10_000_000
QUICK_SLOTS = 1_000_000
GRID_POINTS = 201

Process = Dict[str, Any]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class QueueSection(_Strict):
    c_max: float = math.inf
    q0: Optional[float] = None
    warmup_slots: int = 100_000


class AccountSection(_Strict):
    level: float = 50.0
    c_max: float = 100.0
    c_th: float = 20.0
    delta: float = 1e-3


class ChannelSection(_Strict):
    ab: float = 10.0
    bc: float = 10.0
    a_ue: float = 0.5
    b_ue: float = 0.5


class ScenarioSection(_Strict):
    earn_process: Process = Field(default_factory=lambda: {"kind": "bernoulli_batch", "batch": 2.5, "prob": 0.5})
    channel: ChannelSection = Field(default_factory=ChannelSection)
    p_max: float = 2.0
    p_avg: float = 1.0
    interference_cap: float = 1.0
    noise: float = 1.0
    bandwidth: float = 1.0
    price: float = 1.0
    markup: float = 1.1
    warmup_slots: int = 100_000
    grid_states: int = 64
    wf_samples: int = 1 << 17
    trace_slots: int = 10_000


class LoanSection(_Strict):
    kappa: float = 0.5
    l_max: float = 20.0


class ReputationSection(_Strict):
    mode: Literal["filter", "queue"] = "filter"
    lam: float = 0.9
    value0: float = 0.0
    r_max: float = math.inf
    gain: Process = Field(default_factory=lambda: {"kind": "bernoulli_batch", "batch": 1.0, "prob": 0.4})
    spend: Process = Field(default_factory=lambda: {"kind": "constant", "rate": 0.5})
    credit_earn: Process = Field(default_factory=lambda: {"kind": "bernoulli_batch", "batch": 2.0, "prob": 0.5})
    credit_spend: Process = Field(default_factory=lambda: {"kind": "constant", "rate": 0.9})
    loan: LoanSection = Field(default_factory=LoanSection)
    trace_slots: int = 10_000


class CentralitySection(_Strict):
    increments: Process = Field(default_factory=lambda: {"kind": "bernoulli_batch", "batch": 1.0, "prob": 0.4})
    mu: float = 0.5
    mu_alt: float = 1.0
    level0: float = 0.0
    n_traces: int = 100
    trace_slots: int = 10_000


class SweepSection(_Strict):
    experiment: Literal["tail-verify", "oracle-compare", "credit-scenario", "reputation", "centrality"]
    axes: Dict[str, List[Any]]


class ExperimentConfig(_Strict):
    experiment: Literal["tail-verify", "oracle-compare", "credit-scenario", "reputation", "centrality", "sweep"]
    output_dir: str = "results"
    master_seed: int = Field(default=0, ge=0)
    replications: int = Field(default=1, ge=1)
    threads: int = Field(default=1, ge=1)
    quick: bool = False
    n_slots: Optional[int] = Field(default=None, ge=1)
    arrival: Process = Field(default_factory=lambda: {"kind": "bernoulli_batch", "batch": 1.0, "prob": 0.4})
    departure: Process = Field(default_factory=lambda: {"kind": "constant", "rate": 0.5})
    queue: QueueSection = Field(default_factory=QueueSection)
    fit_range: Optional[Tuple[float, float]] = None
    min_exceed: int = Field(default=1000, ge=1)
    oracle_fit_range: Tuple[float, float] = (20.0, 100.0)
    account: AccountSection = Field(default_factory=AccountSection)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    reputation: ReputationSection = Field(default_factory=ReputationSection)
    centrality: CentralitySection = Field(default_factory=CentralitySection)
    sweep: Optional[SweepSection] = None

    @property
    def slots(self) -> int:
        if self.n_slots is not None:
            return self.n_slots
        return QUICK_SLOTS if self.quick else FULL_SLOTS


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------

def _prefixed(prefix: str, exc: ValidationError) -> ValidationError:
    return type(exc)(f"{prefix}.{exc.field}" if prefix else exc.field, exc.message)


def build_process(data: Process, path: str):
    """Spec from a tagged record, with errors naming ``path.<param>``."""
    kind = data.get("kind")
    if kind == "ar1":
        allowed = set(inspect.signature(ar1_markov).parameters)
    elif kind in SPEC_KINDS:
        allowed = {f.name for f in dataclasses.fields(SPEC_KINDS[kind])}
    else:
        raise ValidationError(f"{path}.kind", f"unknown process kind {kind!r}")
    extra = sorted(set(data) - allowed - {"kind"})
    if extra:
        raise UnknownFieldError(f"{path}.{extra[0]}", f"unknown parameter for {kind}")
    try:
        return spec_from_dict(data)
    except ValidationError as exc:
        raise _prefixed(path, exc) from None


def _account(cfg: ExperimentConfig) -> CreditAccount:
    try:
        return CreditAccount(**cfg.account.model_dump())
    except ValidationError as exc:
        raise _prefixed("account", exc) from None


def _queue_config(cfg: ExperimentConfig) -> QueueConfig:
    try:
        return QueueConfig(**cfg.queue.model_dump())
    except ValidationError as exc:
        raise _prefixed("queue", exc) from None


def _scenario(cfg: ExperimentConfig, seed: int) -> ScenarioConfig:
    sc = cfg.scenario
    params = sc.model_dump(exclude={"earn_process", "channel"})
    try:
        channel = ChannelConfig(**sc.channel.model_dump())
        return ScenarioConfig(earn_process=build_process(sc.earn_process, "scenario.earn_process"),
                              account=_account(cfg), channel=channel, n_slots=cfg.slots, seed=seed, **params)
    except ValidationError as exc:
        if exc.field.startswith(("account.", "scenario.")):
            raise
        raise _prefixed("scenario", exc) from None


def _reputation_parts(cfg: ExperimentConfig):
    rp = cfg.reputation
    try:
        state = ReputationState(rp.mode, rp.value0, rp.lam, rp.r_max)
    except ValidationError as exc:
        raise _prefixed("reputation", exc) from None
    try:
        policy = LoanPolicy(rp.loan.kappa, rp.loan.l_max)
    except ValidationError as exc:
        raise _prefixed("reputation.loan", exc) from None
    specs = {k: build_process(getattr(rp, k), f"reputation.{k}") for k in ("gain", "spend", "credit_earn", "credit_spend")}
    return state, policy, specs


def _centrality_parts(cfg: ExperimentConfig):
    cs = cfg.centrality
    try:
        CentralityState(cs.level0, cs.mu)
    except ValidationError as exc:
        raise _prefixed("centrality", exc) from None
    if not cs.mu_alt > cs.mu:
        raise ValidationError("centrality.mu_alt", "must exceed mu")
    if cs.n_traces < 1 or cs.trace_slots < 1:
        raise ValidationError("centrality.n_traces", "n_traces and trace_slots must be >= 1")
    return build_process(cs.increments, "centrality.increments")


def _set_path(data: dict, path: str, value) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise UnknownFieldError(f"sweep.axes.{path}", f"{k!r} is not a config section")
        node = node[k]
    if keys[-1] not in node:
        raise UnknownFieldError(f"sweep.axes.{path}", "axis does not name a config field")
    node[keys[-1]] = value


def sweep_points(cfg: ExperimentConfig) -> List[Tuple[Dict[str, Any], ExperimentConfig]]:
    """Every point of the sweep's cartesian product as ``(axis values, config)``."""
    sw = cfg.sweep
    base = config_to_dict(cfg)
    base.update(experiment=sw.experiment, sweep=None)
    names = list(sw.axes)
    points = []
    for i, values in enumerate(itertools.product(*(sw.axes[n] for n in names))):
        data = copy.deepcopy(base)
        data["output_dir"] = str(Path(cfg.output_dir) / f"point_{i:03d}")
        for n, v in zip(names, values):
            _set_path(data, n, v)
        points.append((dict(zip(names, values)), _validate_data(data)))
    return points


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every module-level invariant the experiment depends on."""
    build_process(cfg.arrival, "arrival")
    build_process(cfg.departure, "departure")
    _queue_config(cfg)
    _account(cfg)
    if cfg.fit_range is not None and not cfg.fit_range[0] < cfg.fit_range[1]:
        raise ValidationError("fit_range", "need lo < hi")
    if not cfg.oracle_fit_range[0] < cfg.oracle_fit_range[1]:
        raise ValidationError("oracle_fit_range", "need lo < hi")
    exp = cfg.experiment
    if exp == "oracle-compare":
        c_max = cfg.queue.c_max
        if not (math.isfinite(c_max) and float(c_max).is_integer() and 0 < c_max <= 10_000):
            raise ValidationError("queue.c_max", "oracle-compare needs a finite integer cap in [1, 10^4]")
    if exp in ("tail-verify", "oracle-compare", "reputation", "centrality") and cfg.slots < cfg.queue.warmup_slots + 1:
        raise ValidationError("n_slots", f"must exceed queue.warmup_slots = {cfg.queue.warmup_slots}")
    if exp == "credit-scenario":
        _scenario(cfg, cfg.master_seed)
    if exp == "reputation":
        _reputation_parts(cfg)
        _centrality_parts(cfg)
    if exp == "centrality":
        _centrality_parts(cfg)
    if exp == "sweep":
        if cfg.sweep is None:
            raise ValidationError("sweep", "required when experiment is sweep")
        if not cfg.sweep.axes:
            raise ValidationError("sweep.axes", "must name at least one axis")
        for name, values in cfg.sweep.axes.items():
            if not values:
                raise ValidationError(f"sweep.axes.{name}", "needs at least one value")
        sweep_points(cfg)
    return cfg


def _validate_data(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigParseError("config", "top level must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"]) or "config"
        if err["type"] == "extra_forbidden":
            raise UnknownFieldError(path, "unknown field") from None
        raise ValidationError(path, err["msg"]) from None
    return validate(cfg)


def load_config_text(text: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError("config", f"YAML parse error: {exc}") from None
    if isinstance(data, dict) and overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return _validate_data(data)


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Parse and fully validate a YAML experiment config; ``overrides`` replace top-level keys."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError("config", f"cannot read {path}: {exc.strerror}") from None
    return load_config_text(text, overrides)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg.model_dump())


def dump_config(cfg: ExperimentConfig) -> str:
    """Normalized YAML echo with every default filled in; loads back to an equal config."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of everything that can change data files (not output_dir or threads)."""
    data = config_to_dict(cfg)
    data.pop("output_dir")
    data.pop("threads")
    data["n_slots"] = cfg.slots
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Outputs and manifest
# ---------------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, enum.Enum):
        return x.value
    return x


class Outputs:
    """Single writer for an experiment's data files; remembers what it wrote."""

    def __init__(self, root: Path):
        self.root = root
        self.files: List[str] = []

    def table(self, name: str, header, rows) -> None:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.files.append(name)

    def adopt(self, name: str) -> None:
        self.files.append(name)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    version: str
    master_seed: int
    replications: int
    n_slots: int
    started: str
    finished: str
    outputs: Dict[str, str]
    summary: Dict[str, Any]
    status: str = "ok"
    error: Optional[Dict[str, Any]] = None
    errors: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.error is None else int(self.error["exit_code"])

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _error_record(exc: SocialQError) -> dict:
    return {"code": exc.code, "exit_code": exc.exit_code, "message": str(exc)}


def _map(fn: Callable, args: list, threads: int) -> list:
    """``fn`` over ``args`` in order; worker processes when ``threads > 1``."""
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(threads, len(args)), mp_context=mp.get_context("spawn")) as ex:
        return list(ex.map(fn, args))


def _rep_name(cfg: ExperimentConfig, r: int, name: str) -> str:
    return name if cfg.replications == 1 else f"rep{r:03d}_{name}"


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _tail_grid(theta, n_total: int, peak: float) -> np.ndarray:
    """Level grid reaching where about one exceedance is expected in ``n_total`` samples."""
    top = math.log(n_total) / theta.theta if theta.is_finite else max(2 * HEAD_LEVEL, 2 * peak)
    return np.linspace(0.0, top, GRID_POINTS)


def _tail_worker(args) -> Ccdf:
    arrival, departure, n, seed, qcfg, levels = args
    a = sample_path(spec_from_dict(arrival), n, seed, stream=0)
    r = sample_path(spec_from_dict(departure), n, seed, stream=1)
    return empirical_ccdf(simulate_queue(a, r, qcfg), levels)


def _fit_summary(ccdf, theta, fit_range, min_exceed: int) -> dict:
    out = {"theta_star": theta.theta, "theta_kind": theta.kind}
    if not theta.is_finite:
        out.update(theta_hat=None, rel_error=None, r_squared=None)
        return out
    fit = fit_decay_rate(ccdf, tuple(fit_range) if fit_range else None, min_exceed)
    out.update(fit.as_record())
    out["rel_error"] = abs(fit.theta_hat - theta.theta) / theta.theta
    return out


def _ccdf_rows(ccdf: Ccdf, theta):
    rows = []
    for lv, p in zip(ccdf.levels, ccdf.probs):
        rows.append([_num(lv), _num(p), _num(math.log(p)) if p > 0 else "-inf", _num(predicted_tail(theta, float(lv)))])
    return ["level", "ccdf", "log_ccdf", "predicted"], rows


def run_tail_verify(cfg: ExperimentConfig, out: Outputs) -> dict:
    arrival = build_process(cfg.arrival, "arrival")
    departure = build_process(cfg.departure, "departure")
    qcfg = _queue_config(cfg)
    theta = solve_theta(arrival, departure)
    n = cfg.slots
    levels = _tail_grid(theta, cfg.replications * (n - qcfg.warmup_slots), 1.0)
    jobs = [(cfg.arrival, cfg.departure, n, derive_seed(cfg.master_seed, r), qcfg, levels)
            for r in range(cfg.replications)]
    parts = _map(_tail_worker, jobs, cfg.threads)
    ccdf = parts[0]
    for p in parts[1:]:
        ccdf = ccdf.merge(p)
    out.table("ccdf.csv", *_ccdf_rows(ccdf, theta))
    summary = _fit_summary(ccdf, theta, cfg.fit_range, cfg.min_exceed)
    summary.update(n_samples=ccdf.n_samples, mean_arrival=mean_rate(arrival), mean_departure=mean_rate(departure))
    return summary


def _histogram_worker(args) -> np.ndarray:
    arrival, departure, n, seed, qcfg = args
    a = sample_path(spec_from_dict(arrival), n, seed, stream=0)
    r = sample_path(spec_from_dict(departure), n, seed, stream=1)
    return level_histogram(simulate_queue(a, r, qcfg))


def run_oracle_compare(cfg: ExperimentConfig, out: Outputs) -> dict:
    arrival = build_process(cfg.arrival, "arrival")
    departure = build_process(cfg.departure, "departure")
    qcfg = _queue_config(cfg)
    c_max = int(qcfg.c_max)
    oracle = dtmc_stationary(arrival, departure, c_max)
    jobs = [(cfg.arrival, cfg.departure, cfg.slots, derive_seed(cfg.master_seed, r), qcfg)
            for r in range(cfg.replications)]
    counts = np.sum(_map(_histogram_worker, jobs, cfg.threads), axis=0)
    empirical = counts / counts.sum()
    out.table("histogram.csv", ["level_bin", "count", "empirical", "oracle"],
              [[k, int(counts[k]), _num(empirical[k]), _num(oracle[k])] for k in range(c_max + 1)])
    theta = solve_theta(arrival, departure)
    lo, hi = cfg.oracle_fit_range
    ks = np.arange(math.ceil(lo), min(math.floor(hi), c_max - 1) + 1)
    tail = ccdf_from_pmf(oracle, ks)
    out.table("oracle_ccdf.csv", ["level", "ccdf", "log_ccdf", "predicted"],
              [[int(k), _num(p), _num(math.log(p)) if p > 0 else "-inf", _num(predicted_tail(theta, float(k)))]
               for k, p in zip(ks, tail)])
    summary = {"total_variation": total_variation(empirical, oracle), "n_samples": int(counts.sum()),
               "oracle_mass": float(oracle.sum())}
    oracle_fit = _fit_summary(list(zip(ks.tolist(), tail.tolist())), theta, (lo, hi), cfg.min_exceed)
    summary["oracle_fit"] = oracle_fit
    return summary


def _scenario_worker(args) -> dict:
    cfg_data, r = args
    cfg = ExperimentConfig.model_validate(cfg_data)
    cmp = compare_schemes(_scenario(cfg, derive_seed(cfg.master_seed, r)))
    tables, rows = {}, []
    runs = dict((s.value, m) for s, m in cmp.runs.items())
    runs["water_filling_matched"] = cmp.matched
    for name, m in runs.items():
        tables[f"cdf_{name}.csv"] = m.cdf_table()
        tables[f"slots_{name}.csv"] = m.slot_table()
        rows.append((name, m.summary()))
    return {"tables": tables, "rows": rows, "facts": cmp.facts(), "calibration": cmp.calibration.as_record(),
            "plan": cmp.plan.as_record(), "matched_plan": cmp.matched_plan.as_record()}


SUMMARY_COLUMNS = ("outage_prob", "outage_wilson_upper", "constraint_satisfied", "throughput", "avg_power",
                   "min_credit", "mean_credit", "max_interference_ratio", "beta")


def run_credit_scenario(cfg: ExperimentConfig, out: Outputs) -> dict:
    data = config_to_dict(cfg)
    results = _map(_scenario_worker, [(data, r) for r in range(cfg.replications)], cfg.threads)
    rows, reps = [], []
    for r, res in enumerate(results):
        for name, table in res["tables"].items():
            out.table(_rep_name(cfg, r, name), *table)
        for scheme, s in res["rows"]:
            fit = s["tail_fit"] or {}
            rows.append([r, scheme] + [s[c] if isinstance(s[c], (bool, str)) or s[c] is None else _num(s[c])
                                       for c in SUMMARY_COLUMNS]
                        + [_num(fit["theta_hat"]) if fit else "", _num(fit["r_squared"]) if fit else ""])
        reps.append({k: res[k] for k in ("facts", "calibration", "plan", "matched_plan")}
                    | {"schemes": dict(res["rows"])})
    out.table("summary.csv", ["replication", "scheme", *SUMMARY_COLUMNS, "theta_hat", "r_squared"], rows)
    return reps[0] if cfg.replications == 1 else {"replications": reps}


def _filter_path(gains: np.ndarray, lam: float, value0: float) -> np.ndarray:
    """Vectorized form of the per-step reputation filter."""
    out, _ = signal.lfilter([1.0 - lam], [1.0, -lam], gains, zi=[lam * value0])
    return out


def _reputation_worker(args) -> dict:
    cfg_data, r = args
    cfg = ExperimentConfig.model_validate(cfg_data)
    state, policy, specs = _reputation_parts(cfg)
    inc_spec = _centrality_parts(cfg)
    rp, acct, n = cfg.reputation, _account(cfg), cfg.slots
    seed = derive_seed(cfg.master_seed, r)
    warm = cfg.queue.warmup_slots
    gain = sample_path(specs["gain"], n, seed, stream=0)
    summary: Dict[str, Any] = {"mode": rp.mode}
    if rp.mode == "filter":
        rep = _filter_path(gain.values, rp.lam, rp.value0)
    else:
        spend = sample_path(specs["spend"], n, seed, stream=1)
        rep_trace = simulate_queue(gain, spend, QueueConfig(rp.r_max, rp.value0, warm))
        rep = rep_trace.levels
        if math.isinf(rp.r_max):
            theta = solve_theta(specs["gain"], specs["spend"])
            ccdf = empirical_ccdf(rep_trace, _tail_grid(theta, n - warm, 1.0))
            summary["reputation_tail"] = _fit_summary(ccdf, theta, cfg.fit_range, cfg.min_exceed)
    earn = sample_path(specs["credit_earn"], n, seed, stream=2)
    cspend = sample_path(specs["credit_spend"], n, seed, stream=3)
    credit = simulate_queue(earn, cspend, QueueConfig(acct.c_max, acct.level, warm)).levels
    incs = sample_path(inc_spec, n, seed, stream=4)
    cent = simulate_queue(incs, np.full(n, cfg.centrality.mu), QueueConfig(math.inf, cfg.centrality.level0, warm)).levels
    # the loan available in a slot is set by the reputation held entering it
    held = np.concatenate([[rp.value0], rep[:-1]])
    loan = np.minimum(policy.kappa * held, policy.l_max)
    threshold = np.maximum(acct.c_th - loan, 0.0)
    post = slice(warm, n)
    summary.update(
        mean_reputation=float(rep[post].mean()),
        mean_loan=float(loan[post].mean()),
        credit_outage_no_loan=float((credit[post] < acct.c_th).mean()),
        credit_outage_with_loan=float((credit[post] < threshold[post]).mean()),
        loan_limit_at_mean_reputation=loan_limit(policy, float(rep[post].mean())),
        mean_centrality=float(cent[post].mean()),
    )
    k = min(rp.trace_slots, n)
    rows = [[t + 1, _num(credit[t]), _num(rep[t]), _num(cent[t])] for t in range(k)]
    return {"summary": summary, "rows": rows}


def run_reputation(cfg: ExperimentConfig, out: Outputs) -> dict:
    data = config_to_dict(cfg)
    results = _map(_reputation_worker, [(data, r) for r in range(cfg.replications)], cfg.threads)
    for r, res in enumerate(results):
        out.table(_rep_name(cfg, r, "social_trace.csv"), ["slot", "credit_level", "reputation", "centrality"],
                  res["rows"])
    sums = [res["summary"] for res in results]
    return sums[0] if cfg.replications == 1 else {"replications": sums}


def _centrality_worker(args) -> dict:
    cfg_data, r = args
    cfg = ExperimentConfig.model_validate(cfg_data)
    spec = _centrality_parts(cfg)
    cs, n, warm = cfg.centrality, cfg.slots, cfg.queue.warmup_slots
    seed = derive_seed(cfg.master_seed, r)
    violations = drain_errors = 0
    first = None
    for i in range(cs.n_traces):
        inc = sample_path(spec, cs.trace_slots, seed, stream=10 + i).values
        base = centrality_path(inc, cs.mu, cs.level0)
        alt = centrality_path(inc, cs.mu_alt, cs.level0)
        violations += int(np.count_nonzero(alt > base))
        level = float(base[-1])
        drain_errors += int(drain_slots(level, cs.mu) != math.ceil(level / cs.mu))
        if first is None:
            first = (inc, base, alt)
    inc = sample_path(spec, n, seed, stream=0)
    trace = simulate_queue(inc, np.full(n, cs.mu), QueueConfig(math.inf, cs.level0, warm))
    summary: Dict[str, Any] = {"dominance_violations": violations, "drain_mismatches": drain_errors,
                               "n_traces": cs.n_traces, "mean_level": float(trace.stats.mean())}
    theta = solve_theta(spec, Constant(cs.mu))
    ccdf = empirical_ccdf(trace, _tail_grid(theta, n - warm, 1.0))
    summary["tail"] = _fit_summary(ccdf, theta, cfg.fit_range, cfg.min_exceed)
    inc0, base0, alt0 = first
    rows = [[t + 1, _num(inc0[t]), _num(base0[t]), _num(alt0[t])] for t in range(len(inc0))]
    return {"summary": summary, "rows": rows, "ccdf": _ccdf_rows(ccdf, theta)}


def run_centrality(cfg: ExperimentConfig, out: Outputs) -> dict:
    data = config_to_dict(cfg)
    results = _map(_centrality_worker, [(data, r) for r in range(cfg.replications)], cfg.threads)
    for r, res in enumerate(results):
        out.table(_rep_name(cfg, r, "centrality.csv"), ["slot", "increment", "level", "level_alt"], res["rows"])
        out.table(_rep_name(cfg, r, "centrality_ccdf.csv"), *res["ccdf"])
    sums = [res["summary"] for res in results]
    return sums[0] if cfg.replications == 1 else {"replications": sums}


def _flatten(d: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        elif v is None or isinstance(v, (bool, int, float, str)):
            flat[key] = v
    return flat


def run_sweep(cfg: ExperimentConfig, out: Outputs) -> dict:
    points = sweep_points(cfg)
    records, first_error = [], None
    for i, (axes, point_cfg) in enumerate(points):
        m = run_experiment(point_cfg.model_copy(update={"threads": cfg.threads}))
        for name in m.outputs:
            out.adopt(f"point_{i:03d}/{name}")
        rec = {"point": i, **axes, "status": m.status, "error_code": m.error["code"] if m.error else ""}
        rec.update(_flatten(m.summary))
        records.append(rec)
        if m.error and first_error is None:
            first_error = m.error
    columns = list(dict.fromkeys(k for rec in records for k in rec))
    fmt = lambda v: "" if v is None else (_num(v) if isinstance(v, float) else v)
    out.table("sweep.csv", columns, [[fmt(rec.get(c)) for c in columns] for rec in records])
    summary = {"n_points": len(points), "failed_points": sum(r["status"] != "ok" for r in records)}
    if first_error:
        summary["first_error"] = first_error
    return summary


RUNNERS = {
    "tail-verify": run_tail_verify,
    "oracle-compare": run_oracle_compare,
    "credit-scenario": run_credit_scenario,
    "reputation": run_reputation,
    "centrality": run_centrality,
    "sweep": run_sweep,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Run ``cfg.experiment``, write its CSVs and ``manifest.json``; errors land in the manifest."""
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = Outputs(root)
    started = _now()
    summary, error = {}, None
    try:
        summary = RUNNERS[cfg.experiment](cfg, out)
        if cfg.experiment == "sweep" and "first_error" in summary:
            error = summary["first_error"]
    except SocialQError as exc:
        error = _error_record(exc)
    manifest = RunManifest(
        experiment=cfg.experiment,
        config_hash=config_hash(cfg),
        version=__version__,
        master_seed=cfg.master_seed,
        replications=cfg.replications,
        n_slots=cfg.slots,
        started=started,
        finished=_now(),
        outputs={name: sha256_file(root / name) for name in out.files},
        summary=_jsonable(summary),
        status="ok" if error is None else "error",
        error=error,
        errors=[error] if error else [],
    )
    manifest.write(root / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socialq", description="Social-metric queueing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--output-dir")
    run.add_argument("--seed", type=int, dest="master_seed")
    run.add_argument("--replications", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--quick", action="store_true", default=None, help=f"{QUICK_SLOTS:.0e} slots instead of {FULL_SLOTS:.0e}")
    val = sub.add_parser("validate", help="validate a config and echo it with defaults filled in")
    val.add_argument("config")
    sub.add_parser("list-experiments", help="list experiment names")
    sub.add_parser("version", help="print the tool version")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
            return 0
        if args.command == "list-experiments":
            for name, text in EXPERIMENTS.items():
                print(f"{name:16s} {text}")
            return 0
        if args.command == "validate":
            sys.stdout.write(dump_config(load_config(args.config)))
            return 0
        overrides = {k: getattr(args, k) for k in ("output_dir", "master_seed", "replications", "threads", "quick")}
        cfg = load_config(args.config, overrides)
    except SocialQError as exc:
        print(f"error [{exc.code}] {exc}", file=sys.stderr)
        return exc.exit_code
    manifest = run_experiment(cfg)
    if manifest.error:
        print(f"error [{manifest.error['code']}] {manifest.error['message']}", file=sys.stderr)
    else:
        print(json.dumps(manifest.summary, indent=2))
    print(f"manifest: {Path(cfg.output_dir) / 'manifest.json'}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
