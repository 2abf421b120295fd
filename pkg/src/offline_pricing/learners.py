"""Offline pricing learners sharing one backward-induction scaffold.

* greedy: plug-in rates, observed prices only.
* vanilla pessimistic: observed prices only, penalised by the per-price
  uncertainty width.  ``penalty="rate"`` (default) takes the worst case of
  Q over the price's own clipped band; ``penalty="value"`` subtracts the
  width from the plug-in Q directly.
* refined pessimistic: all prices, worst case of Q over the refined interval.
* opportunistic: all prices, minimise the worst-case regret against the
  best alternative price over the refined intervals.

Each learner has a per-period ``*_step`` that takes an arbitrary
continuation value, so fixtures can inject V_{t+1} directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidInputError, UnlearnableError
from .identification import (
    IntervalSet,
    LambdaEstimates,
    default_bounds,
    estimate_lambdas,
    refined_intervals,
)
from .mdp import Policy, argmax_high, argmin_high

DEFAULT_GRID = 1001
METHODS = ("greedy", "vanilla_pess", "refined_pess", "opportunistic")


@dataclass
class LearnerOutput:
    method: str
    policy: Policy
    q: np.ndarray  # (T, L+1, K); nan for prices the method cannot use
    v: np.ndarray  # (T+1, L+1)
    lambda_choice: np.ndarray | None = None  # (T, L+1, K)
    regret_matrix: np.ndarray | None = None  # (T, L+1, K), opportunistic only
    intervals: IntervalSet | None = None

    def actions(self) -> np.ndarray:
        return self.policy.actions()

    def write_csvs(self, prefix, prices):
        """policy / q / lambda-choice / regret-matrix CSVs next to ``prefix``."""
        prices = np.asarray(prices, dtype=float)
        acts = self.actions()
        T, n = acts.shape
        with open(f"{prefix}_policy.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "price"])
            for t in range(T):
                for x in range(n):
                    w.writerow([t + 1, x, repr(float(prices[acts[t, x]]))])
        tables = {"q": self.q, "lambda": self.lambda_choice, "regret": self.regret_matrix}
        for name, table in tables.items():
            if table is None:
                continue
            write_cell_table(f"{prefix}_{name}.csv", table, prices)


def write_cell_table(path, table, prices):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "a", "value"])
        T, n, K = table.shape
        for t in range(T):
            for x in range(n):
                for k in range(K):
                    w.writerow([t + 1, x, repr(float(prices[k])), repr(float(table[t, x, k]))])


def optimize_q_over_interval(price, lower, upper, v_next, mode="min", grid=DEFAULT_GRID):
    """Extremise Q(x, price; lam) over lam in [lower, upper] for every x.

    Uniform grid including both endpoints, then golden-section polishing
    inside the bracket around the best grid point (the polished value is
    kept only if it improves on the grid).  Returns (values, lams), each of
    shape (L+1,).
    """
    if mode not in ("min", "max"):
        raise InvalidInputError("mode must be 'min' or 'max'")
    lower, upper = float(lower), float(upper)
    if not (np.isfinite(lower) and np.isfinite(upper)) or lower <= 0 or lower > upper:
        raise InvalidInputError(f"invalid interval [{lower}, {upper}]")
    v_next = np.asarray(v_next, dtype=float)
    n = v_next.shape[0]
    if lower == upper or grid < 2:
        vals = _kernels.q_grid([lower], price, v_next)[0]
        return vals, np.full(n, lower)
    lams = np.linspace(lower, upper, int(grid))
    table = _kernels.q_grid(lams, price, v_next)
    sign = 1.0 if mode == "min" else -1.0
    idx = np.argmin(sign * table, axis=0)
    cols = np.arange(n)
    vals = table[idx, cols]
    best_lam = lams[idx]
    best_lam[0] = lower
    lo = lams[np.maximum(idx - 1, 0)]
    hi = lams[np.minimum(idx + 1, lams.size - 1)]
    best_lam, vals = _kernels.polish(lo, hi, price, v_next, sign, best_lam, vals)
    return vals, best_lam


def _check_period(prices, *arrays):
    K = len(prices)
    for arr in arrays:
        if np.shape(arr) != (K,):
            raise InvalidInputError("per-price arrays must have one entry per price")


def plugin_step(prices, lam_hat, v_next, penalty=None):
    """Q(x, a) at the plug-in rate minus an optional per-price penalty.

    Prices with nan ``lam_hat`` are unavailable (nan column).
    Returns (q, actions, v).
    """
    prices = np.asarray(prices, dtype=float)
    lam_hat = np.asarray(lam_hat, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    _check_period(prices, lam_hat)
    avail = ~np.isnan(lam_hat)
    if not np.any(avail):
        raise UnlearnableError("no observed price in this period")
    pen = np.zeros(prices.size) if penalty is None else np.nan_to_num(np.asarray(penalty, dtype=float))
    q = np.full((v_next.size, prices.size), np.nan)
    for k in np.flatnonzero(avail):
        # the plug-in rate may be 0 (no demand seen); Q is then a*0 + V(x)
        lam = max(lam_hat[k], 1e-300)
        q[:, k] = _kernels.q_grid([lam], prices[k], v_next)[0]
        q[1:, k] -= pen[k]
    return _select_max(q)


def band_step(prices, band_lower, band_upper, v_next, grid=DEFAULT_GRID):
    """Worst case of Q over each available price's own band (nan = unavailable)."""
    prices = np.asarray(prices, dtype=float)
    band_lower = np.asarray(band_lower, dtype=float)
    band_upper = np.asarray(band_upper, dtype=float)
    _check_period(prices, band_lower, band_upper)
    avail = ~np.isnan(band_lower)
    if not np.any(avail):
        raise UnlearnableError("no observed price in this period")
    n = np.asarray(v_next).size
    q = np.full((n, prices.size), np.nan)
    lam = np.full((n, prices.size), np.nan)
    for k in np.flatnonzero(avail):
        q[:, k], lam[:, k] = optimize_q_over_interval(prices[k], band_lower[k], band_upper[k], v_next, "min", grid)
    q, actions, v = _select_max(q)
    return q, actions, v, lam


def _select_max(q):
    filled = np.where(np.isnan(q), -np.inf, q)
    actions = argmax_high(filled)
    v = filled[np.arange(q.shape[0]), actions]
    return q, actions, v


def pessimistic_step(prices, lower, upper, v_next, grid=DEFAULT_GRID):
    """Maximise the interval-worst-case Q over all prices.

    Returns (q, actions, v, worst_lambda).
    """
    prices = np.asarray(prices, dtype=float)
    _check_period(prices, lower, upper)
    n = np.asarray(v_next).size
    q = np.empty((n, prices.size))
    lam = np.empty((n, prices.size))
    for k, price in enumerate(prices):
        q[:, k], lam[:, k] = optimize_q_over_interval(price, lower[k], upper[k], v_next, "min", grid)
    actions = argmax_high(q)
    v = q[np.arange(n), actions]
    return q, actions, v, lam


def opportunistic_step(prices, lower, upper, v_next, grid=DEFAULT_GRID):
    """Minimax-regret choice over the interval set.

    regret(x, a) = max(0, max_{a' != a} best(x, a') - worst(x, a)), where best
    and worst are the max / min of Q over each price's own interval.  The
    a' = a term is zero because both rates live in the same interval.
    Returns (worst_q, actions, v, regret, worst_lambda).
    """
    prices = np.asarray(prices, dtype=float)
    _check_period(prices, lower, upper)
    n, K = np.asarray(v_next).size, prices.size
    worst = np.empty((n, K))
    best = np.empty((n, K))
    lam = np.empty((n, K))
    for k, price in enumerate(prices):
        worst[:, k], lam[:, k] = optimize_q_over_interval(price, lower[k], upper[k], v_next, "min", grid)
        if lower[k] == upper[k]:
            best[:, k] = worst[:, k]
        else:
            best[:, k] = optimize_q_over_interval(price, lower[k], upper[k], v_next, "max", grid)[0]
    regret = np.zeros((n, K))
    if K > 1:
        for k in range(K):
            rival = np.max(np.delete(best, k, axis=1), axis=1)
            regret[:, k] = np.maximum(0.0, rival - worst[:, k])
    actions = argmin_high(regret)
    v = worst[np.arange(n), actions]
    return worst, actions, v, regret, lam


def _backward(T, n, K, step):
    q = np.zeros((T, n, K))
    v = np.zeros((T + 1, n))
    actions = np.zeros((T, n), dtype=int)
    extras = {}
    for t in range(T - 1, -1, -1):
        res = step(t, v[t + 1])
        q[t], actions[t], v[t] = res[0], res[1], res[2]
        for name, value in res[3].items():
            extras.setdefault(name, np.zeros((T, n, K)))[t] = value
    return q, v, Policy.from_actions(actions, K), extras


def greedy_from_estimates(est: LambdaEstimates, max_inventory: int) -> LearnerOutput:
    n, (T, K) = max_inventory + 1, est.counts.shape

    def step(t, v_next):
        q, a, v = plugin_step(est.prices, est.lambda_hat[t], v_next)
        return q, a, v, {}

    q, v, policy, _ = _backward(T, n, K, step)
    return LearnerOutput("greedy", policy, q, v)


def vanilla_from_estimates(est: LambdaEstimates, max_inventory: int, penalty="rate",
                           grid=DEFAULT_GRID) -> LearnerOutput:
    if penalty not in ("rate", "value"):
        raise InvalidInputError("penalty must be 'rate' or 'value'")
    n, (T, K) = max_inventory + 1, est.counts.shape
    widths = est.delta_table()
    band_lo, band_hi = est.bands()

    def step(t, v_next):
        if penalty == "value":
            q, a, v = plugin_step(est.prices, est.lambda_hat[t], v_next, widths[t])
            return q, a, v, {}
        q, a, v, lam = band_step(est.prices, band_lo[t], band_hi[t], v_next, grid)
        return q, a, v, {"lambda": lam}

    q, v, policy, extras = _backward(T, n, K, step)
    return LearnerOutput("vanilla_pess", policy, q, v, lambda_choice=extras.get("lambda"))


def refined_from_intervals(intervals: IntervalSet, max_inventory: int, grid=DEFAULT_GRID) -> LearnerOutput:
    n, (T, K) = max_inventory + 1, intervals.lower.shape

    def step(t, v_next):
        q, a, v, lam = pessimistic_step(intervals.prices, intervals.lower[t], intervals.upper[t], v_next, grid)
        return q, a, v, {"lambda": lam}

    q, v, policy, extras = _backward(T, n, K, step)
    return LearnerOutput("refined_pess", policy, q, v, lambda_choice=extras["lambda"], intervals=intervals)


def opportunistic_from_intervals(intervals: IntervalSet, max_inventory: int, grid=DEFAULT_GRID) -> LearnerOutput:
    n, (T, K) = max_inventory + 1, intervals.lower.shape

    def step(t, v_next):
        q, a, v, regret, lam = opportunistic_step(intervals.prices, intervals.lower[t], intervals.upper[t],
                                                  v_next, grid)
        return q, a, v, {"lambda": lam, "regret": regret}

    q, v, policy, extras = _backward(T, n, K, step)
    return LearnerOutput("opportunistic", policy, q, v, lambda_choice=extras["lambda"],
                         regret_matrix=extras["regret"], intervals=intervals)


def learn_greedy(dataset, bounds=None) -> LearnerOutput:
    est = estimate_lambdas(dataset, 0.0, bounds)
    return greedy_from_estimates(est, dataset.max_inventory)


def learn_vanilla_pessimistic(dataset, c=1.0, bounds=None, penalty="rate", grid=DEFAULT_GRID) -> LearnerOutput:
    est = estimate_lambdas(dataset, c, bounds)
    return vanilla_from_estimates(est, dataset.max_inventory, penalty, grid)


def learn_refined_pessimistic(dataset, c=1.0, bounds=None, grid=DEFAULT_GRID) -> LearnerOutput:
    intervals = refined_intervals(estimate_lambdas(dataset, c, bounds))
    return refined_from_intervals(intervals, dataset.max_inventory, grid)


def learn_opportunistic(dataset, c=1.0, bounds=None, grid=DEFAULT_GRID) -> LearnerOutput:
    intervals = refined_intervals(estimate_lambdas(dataset, c, bounds))
    return opportunistic_from_intervals(intervals, dataset.max_inventory, grid)


def learn(method: str, dataset, c=1.0, bounds=None, grid=DEFAULT_GRID, penalty="rate") -> LearnerOutput:
    """Dispatch by method tag."""
    bounds = default_bounds(dataset) if bounds is None else bounds
    if method == "greedy":
        return learn_greedy(dataset, bounds)
    if method == "vanilla_pess":
        return learn_vanilla_pessimistic(dataset, c, bounds, penalty, grid)
    if method == "refined_pess":
        return learn_refined_pessimistic(dataset, c, bounds, grid)
    if method == "opportunistic":
        return learn_opportunistic(dataset, c, bounds, grid)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
