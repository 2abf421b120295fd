"""Command-line entry point: ``offline-pricing <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import bound_components
from .errors import InvalidInputError, UnlearnableError
from .experiments import ExperimentConfig, fit_methods, format_policy_table, run_experiment, run_regret_sweep, optimal_price_table
from .identification import estimate_lambdas, refined_intervals
from .learners import METHODS
from .mdp import Policy, evaluate_policy_exact, price_marginals, solve_optimal
from .simulation import (
    EVAL_STREAM,
    OfflineDataset,
    evaluate_policy_mc,
    generate_dataset,
    make_suboptimal_policy,
    scenario_behavior,
    stream,
    write_manifest,
)

EXIT_OK, EXIT_INVALID, EXIT_UNLEARNABLE = 0, 2, 3

FLAG_KEYS = ("scenario", "n", "replications", "c", "grid", "seed", "eval", "mc_rollouts", "out", "penalty",
             "workers", "lambda_max")


def _add_common(p):
    p.add_argument("--scenario", type=int, help="behaviour scenario 1..5")
    p.add_argument("--n", type=int, help="trajectories per dataset")
    p.add_argument("--reps", dest="replications", type=int, help="replications")
    p.add_argument("--c", type=float, help="band width multiplier")
    p.add_argument("--grid", type=int, help="points in the inner lambda grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--eval", choices=["exact", "mc"])
    p.add_argument("--mc-rollouts", dest="mc_rollouts", type=int)
    p.add_argument("--penalty", choices=["rate", "value"], help="vanilla penalty form")
    p.add_argument("--workers", type=int)
    p.add_argument("--lambda-max", dest="lambda_max", type=float, help="fixed upper rate bound")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file; its keys override flags")
    p.add_argument("--strict", action="store_true", help="exit 3 if a learner cannot act")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offline-pricing", description="Offline dynamic pricing toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("solve", help="optimal policy table of the true model"))

    p = sub.add_parser("simulate", help="generate offline datasets")
    _add_common(p)

    p = sub.add_parser("learn", help="fit one learner on a dataset")
    _add_common(p)
    p.add_argument("--method", choices=METHODS, default="refined_pess")
    p.add_argument("--data", help="dataset CSV (default: simulate one)")
    p.add_argument("--replication", type=int, default=0, help="replication to read from --data")

    p = sub.add_parser("evaluate", help="exact or Monte Carlo policy values")
    _add_common(p)
    p.add_argument("--policy", help="policy CSV with columns t, x, price (default: optimal and Type I-III)")

    p = sub.add_parser("experiment", help="replicated comparison of learners")
    _add_common(p)
    p.add_argument("--all-scenarios", action="store_true")
    p.add_argument("--methods", nargs="+", choices=METHODS)

    p = sub.add_parser("sweep", help="regret against dataset size")
    _add_common(p)
    p.add_argument("--ns", type=int, nargs="+", default=[20, 80, 320, 1280])
    p.add_argument("--method", choices=METHODS, default="refined_pess")

    p = sub.add_parser("bounds", help="regret-bound components on one dataset")
    _add_common(p)
    return parser


def load_config(args) -> ExperimentConfig:
    doc = {k: getattr(args, k) for k in FLAG_KEYS if getattr(args, k, None) is not None}
    if getattr(args, "methods", None):
        doc["methods"] = tuple(args.methods)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read config: {exc}") from None
        if not isinstance(overrides, dict):
            raise InvalidInputError("config file must hold a JSON object")
        doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def _out_dir(config):
    if not config.out:
        return None
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(config, args):
    table = optimal_price_table(config)
    model = config.model()
    print(format_policy_table(table))
    print(f"optimal value {solve_optimal(model)[1][0, model.max_inventory]:.6f}")
    out = _out_dir(config)
    if out:
        with open(out / "optimal_policy.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "price"])
            for t in range(table.shape[0]):
                for x in range(table.shape[1]):
                    w.writerow([t + 1, x, repr(float(table[t, x]))])
    return EXIT_OK


def cmd_simulate(config, args):
    model = config.model()
    behavior = scenario_behavior(model, config.scenario)
    out = _out_dir(config) or Path(".")
    with open(out / "dataset.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "trajectory", "t", "inventory", "price", "demand"])
        for r in range(config.replications):
            w.writerows(generate_dataset(model, behavior, config.n, stream(config.seed, r)).csv_rows(r))
    write_manifest(out / "manifest.json", seed=config.seed, scenario=config.scenario, n=config.n,
                   horizon=model.horizon, replications=config.replications,
                   extra={"model": model.to_dict()})
    print(f"wrote {config.replications} dataset(s) to {out / 'dataset.csv'}")
    return EXIT_OK


def _dataset(config, args):
    model = config.model()
    if getattr(args, "data", None):
        data = OfflineDataset.from_csv(args.data, model.prices, model.max_inventory, args.replication)
        if data.horizon != model.horizon:
            raise InvalidInputError(f"dataset has {data.horizon} periods, model has {model.horizon}")
        return model, data
    behavior = scenario_behavior(model, config.scenario)
    return model, generate_dataset(model, behavior, config.n, stream(config.seed, 0))


def cmd_learn(config, args):
    model, data = _dataset(config, args)
    out, _ = fit_methods(config, data, [args.method])[args.method]
    if out is None:
        print(f"{args.method}: some period has no observed price", file=sys.stderr)
        return EXIT_UNLEARNABLE if args.strict else EXIT_OK
    value = evaluate_policy_exact(model, out.policy)[1]
    v_star = solve_optimal(model)[1][0, model.max_inventory]
    print(format_policy_table(model.prices[out.actions()]))
    print(f"estimated value {out.v[0, model.max_inventory]:.6f}  true value {value:.6f}  regret {v_star - value:.6f}")
    dest = _out_dir(config)
    if dest:
        out.write_csvs(str(dest / args.method), model.prices)
        if out.intervals is not None:
            out.intervals.to_csv(dest / "intervals.csv")
    return EXIT_OK


def read_policy_csv(path, model) -> Policy:
    actions = np.full((model.horizon, model.n_states), -1)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            match = np.flatnonzero(np.isclose(model.prices, float(row["price"])))
            if match.size != 1:
                raise InvalidInputError(f"price {row['price']} is not on the price grid")
            actions[int(row["t"]) - 1, int(row["x"])] = match[0]
    if np.any(actions < 0):
        raise InvalidInputError("policy CSV does not cover every (t, x)")
    return Policy.from_actions(actions, model.n_prices)


def cmd_evaluate(config, args):
    model = config.model()
    if args.policy:
        policies = {"policy": read_policy_csv(args.policy, model)}
    else:
        policies = {"optimal": solve_optimal(model)[2]}
        policies.update({f"type_{k}": make_suboptimal_policy(model, k) for k in ("I", "II", "III")})
    rows = []
    for i, (name, pol) in enumerate(policies.items()):
        if config.eval == "exact":
            value, se = evaluate_policy_exact(model, pol)[1], 0.0
        else:
            value, se = evaluate_policy_mc(model, pol, config.mc_rollouts, stream(config.seed, i, EVAL_STREAM))
        rows.append((name, value, se))
        print(f"{name}\t{value:.6f}" + (f"\t(se {se:.4f})" if config.eval == "mc" else ""))
    out = _out_dir(config)
    if out:
        with open(out / "values.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "value", "se"])
            w.writerows((n, repr(v), repr(s)) for n, v, s in rows)
    return EXIT_OK


def cmd_experiment(config, args):
    scenarios = [1, 2, 3, 4, 5] if args.all_scenarios else [config.scenario]
    result = run_experiment(config, scenarios)
    print(f"optimal value {result.optimal_value:.6f}")
    for s in result.summary:
        mean = s.get("mean", float("nan"))
        print(f"scenario {s['scenario']}\t{s['method']:<14}\tmean {mean:.4f}\tsd {s.get('sd', float('nan')):.4f}"
              f"\tfailed {s['failed']}")
    if args.strict and any(r.status == "failed" for r in result.rows):
        return EXIT_UNLEARNABLE
    return EXIT_OK


def cmd_sweep(config, args):
    res = run_regret_sweep(config, args.ns, args.method)
    for n, m, se in zip(res.ns, res.mean_regret, res.se):
        print(f"N={n}\tmean regret {m:.6f}\t(se {se:.6f})")
    print(f"log-log slope {res.slope:.4f}")
    out = _out_dir(config)
    if out:
        (out / "sweep.json").write_text(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


def cmd_bounds(config, args):
    model, data = _dataset(config, args)
    est = estimate_lambdas(data, config.c, config.bounds_for(data))
    intervals = refined_intervals(est)
    p_star = price_marginals(model, solve_optimal(model)[2])
    p_b = price_marginals(model, scenario_behavior(model, config.scenario))
    report = bound_components(model, est, intervals, p_star, p_b)
    print(report.to_json())
    out = _out_dir(config)
    if out:
        report.to_json(out / "bounds.json")
        report.to_csv(out / "bounds.csv", model.prices)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config, args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UnlearnableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNLEARNABLE if args.strict else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
