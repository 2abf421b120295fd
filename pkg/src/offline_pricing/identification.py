"""Demand-rate estimates and partial-identification intervals.

Observed prices get a Hoeffding band clipped into [lambda_min, lambda_max].
Because demand is non-increasing in price, every price (observed or not)
gets the interval

    lower(a) = max over observed a' >= a of band_lower(a')   (else lambda_min)
    upper(a) = min over observed a' <= a of band_upper(a')   (else lambda_max)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

NO_SOURCE = -1


def default_bounds(dataset, lambda_min: float = 1.0, factor: float = 1.5):
    """(lambda_min, factor * max observed demand), never below lambda_min."""
    return float(lambda_min), max(float(lambda_min), factor * float(dataset.demand.max()))


def delta(n: int, c: float = 1.0) -> float:
    """c * sqrt(log(max(n, 2)) / n); the floor keeps singleton cells uncertain."""
    if n < 1:
        raise InvalidInputError("delta needs a positive count")
    return float(c) * math.sqrt(math.log(max(n, 2)) / n)


@dataclass
class LambdaEstimates:
    prices: np.ndarray
    lambda_hat: np.ndarray  # (T, K), nan where N_t(a) = 0
    counts: np.ndarray  # (T, K)
    c: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        self.lambda_hat = np.asarray(self.lambda_hat, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.lambda_hat.shape != self.counts.shape:
            raise InvalidInputError("lambda_hat and counts must share shape (T, K)")
        if not 0 < self.lambda_min <= self.lambda_max:
            raise InvalidInputError("need 0 < lambda_min <= lambda_max")
        obs = self.counts > 0
        if np.any(np.isnan(self.lambda_hat[obs])) or np.any(self.lambda_hat[obs] < 0):
            raise InvalidInputError("observed cells need a non-negative estimate")
        self.lambda_hat = np.where(obs, self.lambda_hat, np.nan)

    @property
    def horizon(self) -> int:
        return self.counts.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return self.counts > 0

    @property
    def n(self) -> int:
        return int(self.counts[0].sum())

    def delta_table(self) -> np.ndarray:
        out = np.full(self.counts.shape, np.nan)
        for t, k in zip(*np.nonzero(self.observed)):
            out[t, k] = delta(int(self.counts[t, k]), self.c)
        return out

    def bands(self):
        """Clipped per-price bands (lower, upper); nan for unobserved cells."""
        d = self.delta_table()
        lo = np.clip(self.lambda_hat - d, self.lambda_min, self.lambda_max)
        hi = np.clip(self.lambda_hat + d, self.lambda_min, self.lambda_max)
        return lo, hi


def estimate_lambdas(dataset, c: float = 1.0, bounds=None) -> LambdaEstimates:
    """Per-(t, price) sample mean of demand over the periods that posted that price."""
    if c < 0:
        raise InvalidInputError("c must be non-negative")
    lo, hi = default_bounds(dataset) if bounds is None else bounds
    K = dataset.prices.size
    counts = dataset.counts
    sums = np.stack(
        [np.bincount(dataset.actions[:, t], weights=dataset.demand[:, t], minlength=K) for t in range(dataset.horizon)]
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        lam_hat = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return LambdaEstimates(dataset.prices, lam_hat, counts, float(c), float(lo), float(hi))


def clipped_bounds(estimates: LambdaEstimates, t: int, k: int):
    """Hoeffding band of an observed price, clipped into [lambda_min, lambda_max]."""
    if not estimates.observed[t, k]:
        raise InvalidInputError(f"price index {k} is not observed at period {t + 1}")
    d = delta(int(estimates.counts[t, k]), estimates.c)
    lam = estimates.lambda_hat[t, k]
    clip = lambda v: min(max(v, estimates.lambda_min), estimates.lambda_max)  # noqa: E731
    return clip(lam - d), clip(lam + d)


@dataclass
class CrudeInterval:
    lower: float
    upper: float
    lower_source: int
    upper_source: int

    @property
    def valid(self) -> bool:
        return self.lower <= self.upper


def crude_interval(estimates: LambdaEstimates, t: int, k: int) -> CrudeInterval:
    """Interval for an unobserved price from its nearest observed neighbours.

    The lower bound comes from the closest observed price above, the upper
    from the closest observed price below.  Noise can leave lower > upper;
    that is reported through ``valid`` and not repaired.
    """
    obs = estimates.observed[t]
    if obs[k]:
        raise InvalidInputError("crude intervals are built for unobserved prices")
    above = [j for j in range(k + 1, obs.size) if obs[j]]
    below = [j for j in range(k) if obs[j]]
    lower, lower_src = estimates.lambda_min, NO_SOURCE
    upper, upper_src = estimates.lambda_max, NO_SOURCE
    if above:
        lower_src = above[0]
        lower = clipped_bounds(estimates, t, lower_src)[0]
    if below:
        upper_src = below[-1]
        upper = clipped_bounds(estimates, t, upper_src)[1]
    return CrudeInterval(lower, upper, lower_src, upper_src)


@dataclass
class IntervalSet:
    prices: np.ndarray
    lower: np.ndarray  # (T, K)
    upper: np.ndarray
    lower_source: np.ndarray  # price index or NO_SOURCE
    upper_source: np.ndarray
    clamped: np.ndarray
    lambda_min: float
    lambda_max: float

    @property
    def horizon(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def from_bounds(cls, prices, lower, upper, lambda_min=None, lambda_max=None) -> "IntervalSet":
        """Wrap externally supplied intervals (no provenance)."""
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        upper = np.atleast_2d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(lower > upper) or np.any(lower <= 0):
            raise InvalidInputError("intervals need 0 < lower <= upper")
        lo = float(lower.min()) if lambda_min is None else float(lambda_min)
        hi = float(upper.max()) if lambda_max is None else float(lambda_max)
        none = np.full(lower.shape, NO_SOURCE)
        return cls(np.asarray(prices, dtype=float), lower, upper, none, none.copy(),
                   np.zeros(lower.shape, dtype=bool), lo, hi)

    def csv_rows(self):
        for t in range(self.horizon):
            for k, price in enumerate(self.prices):
                src_lo, src_hi = self.lower_source[t, k], self.upper_source[t, k]
                yield (
                    t + 1,
                    repr(float(price)),
                    repr(float(self.lower[t, k])),
                    repr(float(self.upper[t, k])),
                    "" if src_lo == NO_SOURCE else repr(float(self.prices[src_lo])),
                    "" if src_hi == NO_SOURCE else repr(float(self.prices[src_hi])),
                    int(self.clamped[t, k]),
                )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "price", "lower", "upper", "lower_source", "upper_source", "clamped"])
            writer.writerows(self.csv_rows())


def refine_bands(prices, band_lower, band_upper, lambda_min, lambda_max) -> IntervalSet:
    """Pool per-price bands (nan = unobserved) into monotone intervals.

    When noise leaves lower > upper the upper end is raised to the lower one
    and the cell is flagged.  Lower bounds are thus never touched by upper
    ones, which keeps static pessimistic choices identical to the
    per-price bands.
    """
    band_lo = np.atleast_2d(np.asarray(band_lower, dtype=float))
    band_hi = np.atleast_2d(np.asarray(band_upper, dtype=float))
    T, K = band_lo.shape
    obs = ~np.isnan(band_lo)
    lower = np.full((T, K), float(lambda_min))
    upper = np.full((T, K), float(lambda_max))
    lower_src = np.full((T, K), NO_SOURCE)
    upper_src = np.full((T, K), NO_SOURCE)
    for t in range(T):
        for k in range(K):
            # nearest price wins ties
            for j in range(k, K):
                if obs[t, j] and (lower_src[t, k] == NO_SOURCE or band_lo[t, j] > lower[t, k]):
                    lower[t, k], lower_src[t, k] = band_lo[t, j], j
            for j in range(k, -1, -1):
                if obs[t, j] and (upper_src[t, k] == NO_SOURCE or band_hi[t, j] < upper[t, k]):
                    upper[t, k], upper_src[t, k] = band_hi[t, j], j
    clamped = lower > upper
    upper = np.where(clamped, lower, upper)
    return IntervalSet(np.asarray(prices, dtype=float), lower, upper, lower_src, upper_src, clamped,
                       float(lambda_min), float(lambda_max))


def refined_intervals(estimates: LambdaEstimates) -> IntervalSet:
    """Sharpest monotone intervals for every price and period."""
    band_lo, band_hi = estimates.bands()
    return refine_bands(estimates.prices, band_lo, band_hi, estimates.lambda_min, estimates.lambda_max)


def kappa(marginals, n: int) -> np.ndarray:
    """Probability bound that some behaviour-supported price is missing from N draws.

    ``marginals`` has shape (T, K) (or (K,)); returns one value per period.
    """
    p = np.atleast_2d(np.asarray(marginals, dtype=float))
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or np.any(p.sum(axis=1) > 1 + 1e-9):
        raise InvalidInputError("marginals must be sub-probability vectors")
    p = np.clip(p, 0.0, 1.0)
    return np.where(p > 0, (1.0 - p) ** n, 0.0).sum(axis=1)
