"""Offline dataset generation under behaviour policies.

Randomness is addressed by (seed, replication, purpose): each address owns an
independent Philox stream, and a dataset of N trajectories consumes the
uniform array ``u[i, t, j]`` (j=0 picks the price, j=1 inverts the Poisson
CDF).  Trajectory ``i`` therefore sees the same draws whatever N is and in
whatever order trajectories are produced.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .mdp import Policy, PricingModel, solve_optimal, solve_worst

DATA_STREAM = 0
EVAL_STREAM = 1


def stream(seed: int, replication: int = 0, purpose: int = DATA_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def sample_demand(lam: float, rng: np.random.Generator, size=None):
    """Poisson draw(s) by sequential inversion of the CDF."""
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0 or lam >= _kernels.LOG_SPACE_LAMBDA:
        raise InvalidInputError(f"demand rate {lam} outside (0, {_kernels.LOG_SPACE_LAMBDA})")
    u = rng.random(size)
    return _kernels.poisson_invert(lam, u)


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)  # (inventory, price, demand)


@dataclass
class OfflineDataset:
    prices: np.ndarray
    max_inventory: int
    inventory: np.ndarray  # (N, T) stock at the start of each period
    actions: np.ndarray  # (N, T) price indices
    demand: np.ndarray  # (N, T) uncensored demand

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        self.inventory = np.asarray(self.inventory, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.demand = np.asarray(self.demand, dtype=np.int64)
        if not (self.inventory.shape == self.actions.shape == self.demand.shape) or self.inventory.ndim != 2:
            raise InvalidInputError("inventory, actions and demand must share shape (N, T)")
        if self.inventory.shape[0] == 0:
            raise InvalidInputError("dataset is empty")

    @property
    def n(self) -> int:
        return self.inventory.shape[0]

    @property
    def horizon(self) -> int:
        return self.inventory.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """N_t(a), shape (T, K)."""
        K = self.prices.size
        return np.stack([np.bincount(self.actions[:, t], minlength=K) for t in range(self.horizon)])

    @property
    def observed(self) -> np.ndarray:
        return self.counts > 0

    def observed_prices(self, t: int) -> list[float]:
        return self.prices[self.observed[t]].tolist()

    def rewards(self) -> np.ndarray:
        return np.minimum(self.demand, self.inventory) * self.prices[self.actions]

    def trajectories(self) -> list[Trajectory]:
        out = []
        for i in range(self.n):
            steps = [
                (int(self.inventory[i, t]), float(self.prices[self.actions[i, t]]), int(self.demand[i, t]))
                for t in range(self.horizon)
            ]
            out.append(Trajectory(steps))
        return out

    def csv_rows(self, replication: int = 0):
        for i in range(self.n):
            for t in range(self.horizon):
                yield (
                    replication,
                    i,
                    t + 1,
                    int(self.inventory[i, t]),
                    repr(float(self.prices[self.actions[i, t]])),
                    int(self.demand[i, t]),
                )

    def to_csv(self, path, replication: int = 0):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replication", "trajectory", "t", "inventory", "price", "demand"])
            writer.writerows(self.csv_rows(replication))

    @classmethod
    def from_csv(cls, path, prices, max_inventory: int, replication: int | None = None) -> "OfflineDataset":
        prices = np.asarray(prices, dtype=float)
        records = []
        try:
            fh = open(path, newline="")
        except OSError as exc:
            raise InvalidInputError(f"cannot read dataset: {exc}") from None
        with fh:
            for row in csv.DictReader(fh):
                if replication is not None and int(row["replication"]) != replication:
                    continue
                records.append(row)
        if not records:
            raise InvalidInputError(f"no rows in {path}")
        n = 1 + max(int(r["trajectory"]) for r in records)
        T = max(int(r["t"]) for r in records)
        if len(records) != n * T:
            raise InvalidInputError(f"expected {n * T} rows for {n} trajectories of length {T}, got {len(records)}")
        inv = np.zeros((n, T), dtype=np.int64)
        act = np.zeros((n, T), dtype=np.int64)
        dem = np.zeros((n, T), dtype=np.int64)
        for r in records:
            i, t = int(r["trajectory"]), int(r["t"]) - 1
            match = np.flatnonzero(np.isclose(prices, float(r["price"])))
            if match.size != 1:
                raise InvalidInputError(f"price {r['price']} is not on the price grid")
            inv[i, t], act[i, t], dem[i, t] = int(r["inventory"]), match[0], int(r["demand"])
        return cls(prices, max_inventory, inv, act, dem)


def write_manifest(path, *, seed, scenario, n, horizon, replications=1, extra=None):
    doc = {"seed": seed, "scenario": scenario, "N": n, "T": horizon, "replications": replications}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
    return doc


def behavior_cdf(policy: Policy) -> np.ndarray:
    """Cumulative rows with the last positive-probability entry pushed past 1.

    Any uniform in [0, 1) then lands on a price with positive probability
    even when the row sum rounds slightly below one.
    """
    probs = policy.probs
    cdf = np.cumsum(probs, axis=2)
    K = probs.shape[2]
    last_pos = K - 1 - np.argmax(probs[..., ::-1] > 0, axis=2)
    idx = np.arange(K)
    cdf = np.where(idx[None, None, :] >= last_pos[..., None], 2.0, cdf)
    return cdf


def generate_dataset(
    model: PricingModel,
    behavior: Policy,
    n: int,
    rng: np.random.Generator,
    init_inventory: int | None = None,
) -> OfflineDataset:
    """Simulate ``n`` independent trajectories of length T under ``behavior``."""
    if n < 1:
        raise InvalidInputError("N must be at least 1")
    expected = (model.horizon, model.n_states, model.n_prices)
    if behavior.shape != expected:
        raise InvalidInputError(f"behaviour policy has shape {behavior.shape}, expected {expected}")
    x0 = np.full(n, model.max_inventory if init_inventory is None else int(init_inventory), dtype=np.int64)
    uniforms = rng.random((n, model.horizon, 2))
    inv, act, dem = _kernels.simulate(model.lam, behavior_cdf(behavior), x0, uniforms)
    return OfflineDataset(model.prices, model.max_inventory, inv, act, dem)


def _excluding(model: PricingModel, excluded: int) -> np.ndarray:
    row = np.ones(model.n_prices)
    row[excluded] = 0.0
    return row / row.sum()


def scenario_behavior(model: PricingModel, k: int) -> Policy:
    """Behaviour policies of the synthetic study.

    1-3: uniform over all prices except the highest, middle, lowest one
    (for the 8/9/10 grid: never 10, never 9, never 8); 4: optimal policy;
    5: value-minimising policy.
    """
    if k in (1, 2, 3):
        if model.n_prices != 3:
            raise InvalidInputError("scenarios 1-3 are defined for three prices")
        return Policy.constant(model.horizon, model.max_inventory, _excluding(model, 3 - k))
    if k == 4:
        return solve_optimal(model)[2]
    if k == 5:
        return solve_worst(model)
    raise InvalidInputError(f"scenario must be in 1..5, got {k}")


SUBOPTIMAL_EXCLUDES = {"I": -1, "II": -2, "III": -3}


def make_suboptimal_policy(model: PricingModel, kind: str, rng: np.random.Generator | None = None) -> Policy:
    """Optimal policy with one price banned and replaced at random.

    Type I bans the highest price, II the second highest, III the third.
    Without ``rng`` the replacement is a uniform mixture over the remaining
    prices; with ``rng`` one replacement is drawn per (t, x) cell.
    """
    try:
        excluded = SUBOPTIMAL_EXCLUDES[kind] % model.n_prices
    except KeyError:
        raise InvalidInputError(f"unknown suboptimal type {kind!r}") from None
    probs = solve_optimal(model)[2].probs.copy()
    hit = probs[:, :, excluded] == 1.0
    others = [k for k in range(model.n_prices) if k != excluded]
    probs[hit] = 0.0
    if rng is None:
        for k in others:
            probs[hit, k] = 1.0 / len(others)
    else:
        picks = rng.choice(others, size=int(hit.sum()))
        rows = probs[hit]
        rows[np.arange(rows.shape[0]), picks] = 1.0
        probs[hit] = rows
    return Policy(probs)


def evaluate_policy_mc(
    model: PricingModel,
    policy: Policy,
    n_rollouts: int,
    rng: np.random.Generator,
    init_inventory: int | None = None,
):
    """Monte Carlo mean total revenue and its standard error."""
    data = generate_dataset(model, policy, n_rollouts, rng, init_inventory)
    totals = data.rewards().sum(axis=1)
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
