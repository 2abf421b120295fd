"""Finite-horizon pricing MDP with Poisson demand and no replenishment.

Time is 0-based in every array: row ``t`` holds period ``t + 1``.  Value
tables carry one extra terminal row of zeros.  Inventory runs over
``0..L`` and price index ``k`` refers to ``model.prices[k]`` (ascending).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidInputError

ROW_TOL = 1e-12


@dataclass(frozen=True)
class PricingModel:
    horizon: int
    max_inventory: int
    prices: np.ndarray
    lam: np.ndarray
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float).reshape(-1)
        lam = np.array(self.lam, dtype=float)
        if lam.ndim == 1:
            lam = np.tile(lam, (int(self.horizon), 1))
        if int(self.horizon) < 1 or int(self.max_inventory) < 1:
            raise InvalidInputError("horizon and max_inventory must be >= 1")
        if prices.size == 0 or np.any(prices <= 0) or np.any(np.diff(prices) <= 0):
            raise InvalidInputError("prices must be positive and strictly increasing")
        if lam.shape != (int(self.horizon), prices.size):
            raise InvalidInputError(f"lambda table has shape {lam.shape}, expected {(self.horizon, prices.size)}")
        lo, hi = float(self.lambda_min), float(self.lambda_max)
        if not (0 < lo <= hi and math.isfinite(hi)):
            raise InvalidInputError("need 0 < lambda_min <= lambda_max < inf")
        if not np.all(np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
            raise InvalidInputError("demand rates must lie in [lambda_min, lambda_max]")
        if np.any(np.diff(lam, axis=1) > 0):
            raise InvalidInputError("demand rates must be non-increasing in price")
        prices.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "max_inventory", int(self.max_inventory))
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lambda_min", lo)
        object.__setattr__(self, "lambda_max", hi)

    @property
    def n_prices(self) -> int:
        return self.prices.size

    @property
    def n_states(self) -> int:
        return self.max_inventory + 1

    @classmethod
    def reference(cls) -> "PricingModel":
        """Four periods, 15 units, prices 8/9/10 with rates 6/4/2.5."""
        return cls(4, 15, [8.0, 9.0, 10.0], [6.0, 4.0, 2.5], 1.0, 10.0)

    def point_mass(self, x: int | None = None) -> np.ndarray:
        x = self.max_inventory if x is None else int(x)
        init = np.zeros(self.n_states)
        init[x] = 1.0
        return init

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "max_inventory": self.max_inventory,
            "prices": self.prices.tolist(),
            "lambda": self.lam.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PricingModel":
        try:
            return cls(
                doc["horizon"],
                doc["max_inventory"],
                doc["prices"],
                doc["lambda"],
                doc["lambda_min"],
                doc["lambda_max"],
            )
        except KeyError as exc:
            raise InvalidInputError(f"model document is missing {exc}") from None

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "PricingModel":
        if isinstance(source, (str, Path)) and Path(source).exists():
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


@dataclass(frozen=True)
class Policy:
    """Markov pricing rule: ``probs[t, x, k]`` = P(price k | period t, stock x)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 3:
            raise InvalidInputError("policy table must be (T, L+1, K)")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidInputError("policy probabilities must be finite and non-negative")
        if np.max(np.abs(probs.sum(axis=2) - 1.0)) > ROW_TOL:
            raise InvalidInputError("every policy row must sum to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def shape(self):
        return self.probs.shape

    @property
    def deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def actions(self) -> np.ndarray:
        """Chosen price index per (t, x); only meaningful for deterministic rules."""
        if not self.deterministic:
            raise InvalidInputError("policy is stochastic")
        return np.argmax(self.probs, axis=2)

    @classmethod
    def from_actions(cls, actions, n_prices: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros(actions.shape + (n_prices,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=2)
        return cls(probs)

    @classmethod
    def constant(cls, horizon: int, max_inventory: int, row) -> "Policy":
        row = np.asarray(row, dtype=float)
        return cls(np.broadcast_to(row, (horizon, max_inventory + 1, row.size)).copy())


def _check_lambda(lam):
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidInputError(f"demand rate must be a positive finite number, got {lam}")
    return lam


def poisson_pmf_prefix(lam: float, x: int):
    """Return (p_0..p_x, P(D >= x+1)) for D ~ Poisson(lam)."""
    lam = _check_lambda(lam)
    if x < 0:
        raise InvalidInputError("x must be non-negative")
    pmf = _kernels.pmf_matrix_numpy([lam], int(x) + 1)[0]
    tail = min(1.0, max(0.0, 1.0 - float(pmf.sum())))
    return pmf, tail


def expected_sales(lam: float, x: int) -> float:
    """E[min(D, x)] for Poisson demand."""
    pmf, tail = poisson_pmf_prefix(lam, x)
    return float(np.dot(np.arange(x + 1), pmf) + x * tail)


def bellman_q(x: int, price: float, lam: float, v_next) -> float:
    """Expected revenue now plus expected continuation value at stock x."""
    lam = _check_lambda(lam)
    v_next = np.asarray(v_next, dtype=float)
    if x == 0:
        return float(v_next[0])
    pmf, tail = poisson_pmf_prefix(lam, x)
    d = np.arange(x + 1)
    immediate = price * (np.dot(d, pmf) + x * tail)
    future = np.dot(v_next[x - d[:-1]], pmf[:-1]) + v_next[0] * (tail + pmf[x])
    return float(immediate + future)


def bellman_table(model: PricingModel, t: int, v_next, lam_row=None) -> np.ndarray:
    """Q_t(x, k) for all x, k under the model's (or supplied) rates; shape (L+1, K)."""
    lam_row = model.lam[t] if lam_row is None else np.asarray(lam_row, dtype=float)
    out = np.empty((model.n_states, model.n_prices))
    for k, price in enumerate(model.prices):
        out[:, k] = _kernels.q_grid([lam_row[k]], price, v_next)[0]
    return out


def argmax_high(values: np.ndarray) -> np.ndarray:
    """Argmax over the last axis, ties resolved toward the highest index."""
    k = values.shape[-1]
    return k - 1 - np.argmax(values[..., ::-1], axis=-1)


def argmin_low(values: np.ndarray) -> np.ndarray:
    return np.argmin(values, axis=-1)


def argmin_high(values: np.ndarray) -> np.ndarray:
    k = values.shape[-1]
    return k - 1 - np.argmin(values[..., ::-1], axis=-1)


def _solve(model: PricingModel, pick):
    T, n, K = model.horizon, model.n_states, model.n_prices
    q = np.zeros((T, n, K))
    v = np.zeros((T + 1, n))
    actions = np.zeros((T, n), dtype=int)
    for t in range(T - 1, -1, -1):
        q[t] = bellman_table(model, t, v[t + 1])
        actions[t] = pick(q[t])
        v[t] = np.take_along_axis(q[t], actions[t][:, None], axis=1)[:, 0]
    return q, v, Policy.from_actions(actions, K)


def solve_optimal(model: PricingModel):
    """Backward induction over all prices; returns (Q, V, policy)."""
    return _solve(model, argmax_high)


def solve_worst(model: PricingModel) -> Policy:
    """Policy minimising expected revenue (ties toward the lowest price)."""
    return _solve(model, argmin_low)[2]


def _check_policy_shape(model: PricingModel, policy: Policy):
    expected = (model.horizon, model.n_states, model.n_prices)
    if policy.shape != expected:
        raise InvalidInputError(f"policy has shape {policy.shape}, expected {expected}")


def _check_init(model, init):
    init = model.point_mass() if init is None else np.asarray(init, dtype=float)
    if init.shape != (model.n_states,) or np.any(init < 0) or abs(init.sum() - 1.0) > ROW_TOL:
        raise InvalidInputError("initial distribution must be a probability vector over 0..L")
    return init


def evaluate_policy_exact(model: PricingModel, policy: Policy, init=None):
    """Exact V^pi table and E[V^pi_1(X_1)] (X_1 = L unless ``init`` is given)."""
    if not isinstance(policy, Policy):
        policy = Policy(policy)
    _check_policy_shape(model, policy)
    init = _check_init(model, init)
    v = np.zeros((model.horizon + 1, model.n_states))
    for t in range(model.horizon - 1, -1, -1):
        q = bellman_table(model, t, v[t + 1])
        v[t] = np.sum(q * policy.probs[t], axis=1)
    return v, float(init @ v[0])


def transition_matrix(model: PricingModel, t: int, k: int) -> np.ndarray:
    """P(X_{t+1} = y | X_t = x, price k); rows sum to one, stock 0 is absorbing."""
    n = model.n_states
    pmf = _kernels.pmf_matrix_numpy([model.lam[t, k]], n)[0]
    mat = np.zeros((n, n))
    mat[0, 0] = 1.0
    for x in range(1, n):
        mat[x, x - np.arange(x)] = pmf[:x]
        mat[x, 0] = max(0.0, 1.0 - float(pmf[:x].sum()))
    return mat


def forward_state_distribution(model: PricingModel, policy: Policy, init=None) -> np.ndarray:
    """Inventory distribution at every period; shape (T+1, L+1), row 0 is ``init``."""
    _check_policy_shape(model, policy)
    init = _check_init(model, init)
    dist = np.zeros((model.horizon + 1, model.n_states))
    dist[0] = init
    for t in range(model.horizon):
        nxt = np.zeros(model.n_states)
        for k in range(model.n_prices):
            weight = dist[t] * policy.probs[t, :, k]
            if np.any(weight > 0):
                nxt += weight @ transition_matrix(model, t, k)
        dist[t + 1] = nxt
    return dist


def price_marginals(model: PricingModel, policy: Policy, init=None) -> np.ndarray:
    """P_t^pi(a): marginal law of the posted price per period, shape (T, K)."""
    dist = forward_state_distribution(model, policy, init)
    return np.einsum("tx,txk->tk", dist[:-1], policy.probs)
