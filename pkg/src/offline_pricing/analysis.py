"""Diagnostics for learned pricing policies.

All expectations over states are exact: state laws come from forward
propagation under the true model, never from sampling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .identification import NO_SOURCE, IntervalSet, LambdaEstimates, delta, kappa
from .mdp import Policy, PricingModel, bellman_table, evaluate_policy_exact, forward_state_distribution, solve_optimal


@dataclass
class DecompositionReport:
    mu: float
    j1: float
    j2: float
    j3: float
    residual: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def l_table(model: PricingModel, q_hat, v_hat) -> np.ndarray:
    """l_t(x, a) = (true Bellman operator applied to V_hat_{t+1})(x, a) - Q_hat_t(x, a)."""
    q_hat = np.nan_to_num(np.asarray(q_hat, dtype=float))
    v_hat = np.asarray(v_hat, dtype=float)
    shape = (model.horizon, model.n_states, model.n_prices)
    if q_hat.shape != shape or v_hat.shape != (model.horizon + 1, model.n_states):
        raise InvalidInputError("estimated tables do not match the model's shape")
    out = np.empty(shape)
    for t in range(model.horizon):
        out[t] = bellman_table(model, t, v_hat[t + 1]) - q_hat[t]
    return out


def decompose(model: PricingModel, q_hat, v_hat, pi_hat: Policy, pi_star: Policy, init=None) -> DecompositionReport:
    """Split the value gap between ``pi_star`` and ``pi_hat`` into three terms.

    The identity needs V_hat_t(x) = sum_a pi_hat(a|x) Q_hat_t(x, a); unusable
    (nan) Q_hat cells are read as zero, which is harmless as long as
    ``pi_hat`` puts no mass on them.
    """
    q_hat = np.nan_to_num(np.asarray(q_hat, dtype=float))
    lt = l_table(model, q_hat, v_hat)
    d_star = forward_state_distribution(model, pi_star, init)
    d_hat = forward_state_distribution(model, pi_hat, init)
    j1 = float(np.einsum("tx,txk,txk->", d_star[:-1], pi_star.probs, lt))
    j2 = float(np.einsum("tx,txk,txk->", d_hat[:-1], pi_hat.probs, lt))
    j3 = float(np.einsum("tx,txk,txk->", d_star[:-1], q_hat, pi_star.probs - pi_hat.probs))
    mu = evaluate_policy_exact(model, pi_star, init)[1] - evaluate_policy_exact(model, pi_hat, init)[1]
    return DecompositionReport(mu, j1, j2, j3, abs(mu - (j1 - j2 + j3)))


def decomposition_check(model: PricingModel, learned, optimal: Policy | None = None, init=None) -> DecompositionReport:
    """Decompose a learner's regret against the optimal (or a given) policy."""
    if optimal is None:
        optimal = solve_optimal(model)[2]
    return decompose(model, learned.q, learned.v, learned.policy, optimal, init)


@dataclass
class BoundReport:
    in_m: np.ndarray  # (T, K) bool
    eta: np.ndarray  # (T, K)
    term1: float
    term2: float
    kappa: np.ndarray  # (T,)
    prob_floor: float

    def to_dict(self) -> dict:
        return {
            "in_M": self.in_m.astype(int).tolist(),
            "eta": self.eta.tolist(),
            "term1": self.term1,
            "term2": self.term2,
            "kappa": self.kappa.tolist(),
            "prob_floor": self.prob_floor,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path, prices):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "price", "in_M", "eta"])
            T, K = self.eta.shape
            for t in range(T):
                for k in range(K):
                    w.writerow([t + 1, repr(float(prices[k])), int(self.in_m[t, k]), repr(float(self.eta[t, k]))])


def eta_table(model: PricingModel, estimates: LambdaEstimates, intervals: IntervalSet) -> np.ndarray:
    """Per-(t, a) unobservability penalty built from the true rates of the proxy prices.

    Observed prices are their own proxies (eta = 4 delta).  Unobserved ones
    use the prices their refined bounds were borrowed from.
    """
    T, K = estimates.counts.shape
    out = np.empty((T, K))
    for t in range(T):
        for k in range(K):
            if estimates.observed[t, k]:
                up = low = k
            else:
                up, low = intervals.upper_source[t, k], intervals.lower_source[t, k]
            d = {j: 2.0 * delta(int(estimates.counts[t, j]), estimates.c) for j in (up, low) if j != NO_SOURCE}
            if up != NO_SOURCE and low != NO_SOURCE:
                out[t, k] = model.lam[t, up] - model.lam[t, low] + d[up] + d[low]
            elif low != NO_SOURCE:
                out[t, k] = estimates.lambda_max - model.lam[t, low] + d[low]
            elif up != NO_SOURCE:
                out[t, k] = model.lam[t, up] + d[up]
            else:
                out[t, k] = estimates.lambda_max - estimates.lambda_min
    return out


def bound_components(model: PricingModel, estimates: LambdaEstimates, intervals: IntervalSet,
                     optimal_marginals, behavior_marginals) -> BoundReport:
    """Both regret-bound terms, reported without their unspecified constants."""
    if optimal_marginals is None or behavior_marginals is None:
        raise InvalidInputError("both optimal and behaviour price marginals are required")
    p_star = np.asarray(optimal_marginals, dtype=float)
    p_b = np.asarray(behavior_marginals, dtype=float)
    if p_star.shape != estimates.counts.shape or p_b.shape != p_star.shape:
        raise InvalidInputError("marginals must have shape (T, K)")
    in_m = (p_star <= 0) | (p_b > 0)
    eta = eta_table(model, estimates, intervals)
    counts = np.maximum(estimates.counts, 1)
    width = np.vectorize(lambda n: delta(int(n), 1.0))(counts)
    # E^b[(P*/P^b) w 1(M)] collapses to sum_a P*(a) w(a) over supported a in M
    term1 = float(np.sum(np.where(in_m & (p_b > 0), p_star * width, 0.0)))
    term2 = float(np.sum(np.where(~in_m, p_star * eta, 0.0)))
    kap = kappa(p_b, estimates.n)
    inv = np.where(estimates.observed, 1.0 / counts, 0.0).sum(axis=1)
    floor = 1.0 - float(np.sum(inv + kap))
    return BoundReport(in_m, eta, term1, term2, kap, floor)


@dataclass
class ValidityReport:
    violations: int
    cells: int

    @property
    def fraction(self) -> float:
        return self.violations / self.cells


def pessimism_validity(model: PricingModel, learned, tol: float = 1e-9) -> ValidityReport:
    """Count cells where the pessimistic Q estimate exceeds the true optimal Q."""
    q_star = solve_optimal(model)[0]
    q_hat = np.asarray(learned.q, dtype=float)
    viol = np.nan_to_num(q_hat - q_star, nan=-np.inf) > tol
    return ValidityReport(int(viol.sum()), int(q_star.size))


@dataclass
class LipschitzReport:
    empirical: float
    analytic: float
    samples: int


def analytic_lipschitz(model: PricingModel, v=None) -> float:
    """sup over (t, x, a) of |dQ/dlambda|, bounded by max_y |a - (V(y) - V(y-1))|."""
    v = solve_optimal(model)[1] if v is None else np.asarray(v, dtype=float)
    dv = np.diff(v[1:], axis=1)  # (T, L)
    return float(np.max(np.abs(model.prices[None, None, :] - dv[:, :, None])))


def lipschitz_check(model: PricingModel, n_samples: int, rng: np.random.Generator, v=None) -> LipschitzReport:
    """Largest observed |Q(lam1) - Q(lam2)| / |lam1 - lam2| against the analytic constant."""
    v = solve_optimal(model)[1] if v is None else np.asarray(v, dtype=float)
    lo, hi = model.lambda_min, model.lambda_max
    worst = 0.0
    ts = rng.integers(0, model.horizon, n_samples)
    ks = rng.integers(0, model.n_prices, n_samples)
    lam1 = rng.uniform(lo, hi, n_samples)
    lam2 = rng.uniform(lo, hi, n_samples)
    for t, k, l1, l2 in zip(ts, ks, lam1, lam2):
        if l1 == l2:
            continue
        q = _kernels.q_grid([l1, l2], model.prices[k], v[t + 1])
        worst = max(worst, float(np.max(np.abs(q[0] - q[1]))) / abs(l1 - l2))
    return LipschitzReport(worst, analytic_lipschitz(model, v), int(n_samples))


STATIC_CONDITIONS = ("m1", "m2", "m3")


def static_condition_check(prices, lower, upper, lambda_min, lambda_max, which: str) -> bool:
    """Sufficient conditions for the static minimax-regret rule to pick a1, a2 or a3.

    ``prices`` ascend, so a3 = prices[0] < a2 = prices[1] < a1 = prices[2].
    The per-price upper / lower band ends are read from the refined
    intervals; the conditions are sufficient when the named price is the
    unobserved one and its bounds are borrowed from its neighbours.
    """
    if len(prices) != 3 or np.shape(lower) != (3,) or np.shape(upper) != (3,):
        raise InvalidInputError("static conditions need exactly three prices")
    a3, a2, a1 = (float(p) for p in prices)
    l3, l2, l1 = (float(v) for v in lower)
    u3, u2, u1 = (float(v) for v in upper)
    if which == "m1":
        return a2 * u2 > a3 * u3 and a1 * (u2 + lambda_min) >= a2 * u2 + max(a3 * l3, a2 * l2)
    if which == "m2":
        return a1 * u1 > a2 * u3 and a2 * l1 >= a3 * l3 and a2 * (u3 + l1) >= a1 * (u1 + l1)
    if which == "m3":
        return (a1 * u1 <= a2 * u2 <= a3 * lambda_max
                and a2 * u2 + max(a1 * l1, a2 * l2) <= a3 * (lambda_max + l2))
    raise InvalidInputError(f"which must be one of {STATIC_CONDITIONS}")


def static_regret(prices, lower, upper) -> np.ndarray:
    """Closed-form static regret a' U(a') - a L(a) maximised over a' != a."""
    prices = np.asarray(prices, dtype=float)
    best = prices * np.asarray(upper, dtype=float)
    worst = prices * np.asarray(lower, dtype=float)
    out = np.empty(prices.size)
    for k in range(prices.size):
        out[k] = max(0.0, np.max(np.delete(best, k)) - worst[k])
    return out
