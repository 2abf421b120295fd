"""Replicated offline-pricing experiments on the synthetic pricing model.

Each replication draws its dataset from its own (seed, replication) stream,
so results do not depend on worker count or execution order.  Result CSVs
carry no timings; those go to a separate file so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, UnlearnableError
from .identification import estimate_lambdas, refined_intervals
from .learners import (
    DEFAULT_GRID,
    METHODS,
    greedy_from_estimates,
    opportunistic_from_intervals,
    refined_from_intervals,
    vanilla_from_estimates,
)
from .mdp import PricingModel, evaluate_policy_exact, solve_optimal
from .simulation import EVAL_STREAM, evaluate_policy_mc, generate_dataset, scenario_behavior, stream

STUDY_METHODS = ("vanilla_pess", "refined_pess", "opportunistic")


@dataclass
class ExperimentConfig:
    horizon: int = 4
    max_inventory: int = 15
    prices: tuple = (8.0, 9.0, 10.0)
    lam: tuple = (6.0, 4.0, 2.5)
    lambda_min: float = 1.0
    lambda_max: float | None = None  # None: 1.5 x the largest demand in each dataset
    lambda_max_factor: float = 1.5
    scenario: int = 4
    n: int = 20
    replications: int = 100
    c: float = 1.0
    grid: int = DEFAULT_GRID
    seed: int = 0
    eval: str = "exact"
    mc_rollouts: int = 5000
    methods: tuple = STUDY_METHODS
    penalty: str = "rate"
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        self.prices = tuple(float(p) for p in self.prices)
        self.lam = tuple(np.asarray(self.lam, dtype=float).tolist()) if np.ndim(self.lam) == 1 else self.lam
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self):
        positive = {"horizon": self.horizon, "max_inventory": self.max_inventory, "n": self.n,
                    "replications": self.replications, "grid": self.grid, "mc_rollouts": self.mc_rollouts,
                    "workers": self.workers}
        for name, value in positive.items():
            if int(value) < 1:
                raise InvalidInputError(f"{name} must be positive")
        if self.scenario not in (1, 2, 3, 4, 5):
            raise InvalidInputError("scenario must be in 1..5")
        if self.c < 0:
            raise InvalidInputError("c must be non-negative")
        if self.eval not in ("exact", "mc"):
            raise InvalidInputError("eval must be 'exact' or 'mc'")
        if self.penalty not in ("rate", "value"):
            raise InvalidInputError("penalty must be 'rate' or 'value'")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InvalidInputError(f"unknown methods {sorted(unknown)}")
        if self.lambda_max is not None and self.lambda_max < self.lambda_min:
            raise InvalidInputError("lambda_max must not be below lambda_min")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InvalidInputError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidInputError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    def model(self) -> PricingModel:
        lam = np.asarray(self.lam, dtype=float)
        hi = max(10.0, float(lam.max())) if self.lambda_max is None else float(self.lambda_max)
        return PricingModel(self.horizon, self.max_inventory, self.prices, lam, self.lambda_min, hi)

    def bounds_for(self, dataset):
        if self.lambda_max is not None:
            return self.lambda_min, float(self.lambda_max)
        return self.lambda_min, max(self.lambda_min, self.lambda_max_factor * float(dataset.demand.max()))


@dataclass
class ResultRow:
    scenario: int
    method: str
    replication: int
    value: float
    regret: float
    status: str = "ok"
    mc_se: float = float("nan")
    runtime_ms: float = 0.0

    RESULT_FIELDS = ("scenario", "method", "replication", "value", "regret", "status", "mc_se")


@dataclass
class ExperimentResult:
    rows: list
    summary: list
    optimal_value: float
    config: ExperimentConfig = field(repr=False, default=None)


def fit_methods(config: ExperimentConfig, dataset, methods=None):
    """Run the requested learners on one dataset; failures map to None."""
    methods = config.methods if methods is None else methods
    bounds = config.bounds_for(dataset)
    est = estimate_lambdas(dataset, config.c, bounds)
    intervals = refined_intervals(est) if {"refined_pess", "opportunistic"} & set(methods) else None
    fitted = {}
    for method in methods:
        start = time.perf_counter()
        try:
            if method == "greedy":
                out = greedy_from_estimates(estimate_lambdas(dataset, 0.0, bounds), dataset.max_inventory)
            elif method == "vanilla_pess":
                out = vanilla_from_estimates(est, dataset.max_inventory, config.penalty, config.grid)
            elif method == "refined_pess":
                out = refined_from_intervals(intervals, dataset.max_inventory, config.grid)
            else:
                out = opportunistic_from_intervals(intervals, dataset.max_inventory, config.grid)
        except UnlearnableError:
            out = None
        fitted[method] = (out, 1000.0 * (time.perf_counter() - start))
    return fitted


def run_replication(config: ExperimentConfig, scenario: int, replication: int) -> list:
    model = config.model()
    v_star = solve_optimal(model)[1][0, model.max_inventory]
    behavior = scenario_behavior(model, scenario)
    dataset = generate_dataset(model, behavior, config.n, stream(config.seed, replication))
    rows = []
    for method, (out, ms) in fit_methods(config, dataset).items():
        if out is None:
            rows.append(ResultRow(scenario, method, replication, float("nan"), float("nan"), "failed",
                                  runtime_ms=ms))
            continue
        se = float("nan")
        if config.eval == "exact":
            value = evaluate_policy_exact(model, out.policy)[1]
        else:
            value, se = evaluate_policy_mc(model, out.policy, config.mc_rollouts,
                                           stream(config.seed, replication, EVAL_STREAM))
        rows.append(ResultRow(scenario, method, replication, value, v_star - value, "ok", se, ms))
    return rows


def _replication_job(args):
    return run_replication(*args)


def _run_rows(config: ExperimentConfig, scenarios) -> list:
    jobs = [(config, s, r) for s in scenarios for r in range(config.replications)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_replication_job, jobs))
    else:
        chunks = [_replication_job(job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def summarize(rows) -> list:
    """Per (scenario, method): mean / sd / se / quartiles of value, mean regret."""
    out = []
    keys = sorted({(r.scenario, r.method) for r in rows}, key=lambda k: (k[0], METHODS.index(k[1])))
    for scenario, method in keys:
        group = [r for r in rows if r.scenario == scenario and r.method == method]
        vals = np.array([r.value for r in group if r.status == "ok"])
        regs = np.array([r.regret for r in group if r.status == "ok"])
        entry = {"scenario": scenario, "method": method, "count": int(vals.size),
                 "failed": len(group) - int(vals.size)}
        if vals.size:
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            q25, q50, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
            entry.update(mean=float(vals.mean()), sd=sd, se=sd / np.sqrt(vals.size), q25=float(q25),
                         median=float(q50), q75=float(q75), mean_regret=float(regs.mean()))
        out.append(entry)
    return out


def write_results(result: ExperimentResult, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ResultRow.RESULT_FIELDS)
        for r in result.rows:
            w.writerow([r.scenario, r.method, r.replication, repr(r.value), repr(r.regret), r.status, repr(r.mc_se)])
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "method", "replication", "runtime_ms"])
        for r in result.rows:
            w.writerow([r.scenario, r.method, r.replication, f"{r.runtime_ms:.3f}"])
    cols = ["scenario", "method", "count", "failed", "mean", "sd", "se", "q25", "median", "q75", "mean_regret"]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(result.summary)
    doc = {"optimal_value": result.optimal_value, "summary": result.summary}
    (out / "summary.json").write_text(json.dumps(doc, indent=2))
    if result.config is not None:
        (out / "config.json").write_text(json.dumps(result.config.to_dict(), indent=2))


def run_experiment(config: ExperimentConfig, scenarios=None) -> ExperimentResult:
    """Replicate generate -> fit -> evaluate for one or several scenarios."""
    scenarios = [config.scenario] if scenarios is None else list(scenarios)
    rows = _run_rows(config, scenarios)
    model = config.model()
    result = ExperimentResult(rows, summarize(rows), float(solve_optimal(model)[1][0, model.max_inventory]), config)
    if config.out:
        write_results(result, config.out)
    return result


def optimal_price_table(config: ExperimentConfig | None = None):
    """Optimal price per (t, x) as a (T, L+1) array of prices."""
    model = (config or ExperimentConfig()).model()
    actions = solve_optimal(model)[2].actions()
    return model.prices[actions]


def format_policy_table(table) -> str:
    T, n = table.shape
    lines = ["x\t" + "\t".join(f"t={t + 1}" for t in range(T))]
    for x in range(1, n):
        lines.append(f"{x}\t" + "\t".join(f"{table[t, x]:g}" for t in range(T)))
    return "\n".join(lines)


@dataclass
class SweepResult:
    ns: list
    mean_regret: list
    se: list
    slope: float
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def run_regret_sweep(config: ExperimentConfig, ns, method: str = "refined_pess") -> SweepResult:
    """Mean exact regret per dataset size and the log-log slope against N."""
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")
    means, ses = [], []
    for n in ns:
        cfg = ExperimentConfig.from_dict({**config.to_dict(), "n": int(n), "methods": (method,), "eval": "exact",
                                          "out": None})
        regs = np.array([r.regret for r in _run_rows(cfg, [cfg.scenario]) if r.status == "ok"])
        means.append(float(regs.mean()))
        ses.append(float(regs.std(ddof=1) / np.sqrt(regs.size)) if regs.size > 1 else 0.0)
    positive = np.array(means) > 0
    slope = float("nan")
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(np.asarray(ns, float)[positive]), np.log(np.array(means)[positive]), 1)[0])
    return SweepResult([int(n) for n in ns], means, ses, slope, method)
