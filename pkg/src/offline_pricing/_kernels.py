"""Hot numeric kernels, compiled with numba when available.

Every kernel has two implementations: a loop version compiled with
``numba.njit`` and a vectorised pure-numpy version.  The backend is picked
once at import time; set ``OFFLINE_PRICING_DISABLE_NUMBA=1`` to force numpy.
Both backends are importable directly (``*_numba`` / ``*_numpy``) so tests
and the benchmark can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False


def _numba_disabled_by_env() -> bool:
    flag = os.environ.get("OFFLINE_PRICING_DISABLE_NUMBA", "")
    return flag.strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _numba_disabled_by_env()

# exp(-lam) underflows past ~745; switch to log-space terms well before that.
LOG_SPACE_LAMBDA = 700.0
GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)
POLISH_ITERS = 60
# polished optima must beat the grid by more than rounding noise
POLISH_MIN_GAIN = 1e-12


def _maybe_njit(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# loop implementations (compiled by numba)
# ---------------------------------------------------------------------------


def _pmf_fill(lam, out):
    n = out.shape[0]
    if lam < LOG_SPACE_LAMBDA:
        p = math.exp(-lam)
        out[0] = p
        for d in range(1, n):
            p = p * lam / d
            out[d] = p
    else:
        log_lam = math.log(lam)
        for d in range(n):
            out[d] = math.exp(-lam + d * log_lam - math.lgamma(d + 1.0))


_pmf_fill_nb = _maybe_njit(_pmf_fill)


def _q_point(lam, price, x, v_next, pmf):
    if x == 0:
        return v_next[0]
    _pmf_fill_nb(lam, pmf[: x + 1])
    cdf = 0.0
    dsum = 0.0
    future = 0.0
    for d in range(x + 1):
        p = pmf[d]
        cdf += p
        dsum += d * p
        if d < x:
            future += v_next[x - d] * p
    tail = 1.0 - cdf
    if tail < 0.0:
        tail = 0.0
    elif tail > 1.0:
        tail = 1.0
    # demand >= x empties the shelf
    return price * (dsum + x * tail) + future + v_next[0] * (tail + pmf[x])


_q_point_nb = _maybe_njit(_q_point)


def _q_grid_loop(lams, price, v_next):
    n_grid = lams.shape[0]
    n = v_next.shape[0]
    out = np.zeros((n_grid, n))
    pmf = np.empty(n)
    for g in range(n_grid):
        _pmf_fill_nb(lams[g], pmf)
        out[g, 0] = v_next[0]
        cdf = pmf[0]
        dsum = 0.0
        for x in range(1, n):
            p = pmf[x]
            cdf += p
            dsum += x * p
            tail = 1.0 - cdf
            if tail < 0.0:
                tail = 0.0
            elif tail > 1.0:
                tail = 1.0
            future = 0.0
            for d in range(x):
                future += v_next[x - d] * pmf[d]
            out[g, x] = price * (dsum + x * tail) + future + v_next[0] * (tail + p)
    return out


def _polish_loop(lo, hi, price, v_next, sign, lam0, val0):
    """Golden-section refinement of sign*Q on per-inventory brackets."""
    n = v_next.shape[0]
    lam_out = lam0.copy()
    val_out = val0.copy()
    pmf = np.empty(n)
    for x in range(1, n):
        a = lo[x]
        b = hi[x]
        if not b > a:
            continue
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc = sign * _q_point_nb(c, price, x, v_next, pmf)
        fd = sign * _q_point_nb(d, price, x, v_next, pmf)
        for _ in range(POLISH_ITERS):
            if fc < fd:
                b = d
                d = c
                fd = fc
                c = b - GOLDEN * (b - a)
                fc = sign * _q_point_nb(c, price, x, v_next, pmf)
            else:
                a = c
                c = d
                fc = fd
                d = a + GOLDEN * (b - a)
                fd = sign * _q_point_nb(d, price, x, v_next, pmf)
        if fc < fd:
            lam_best = c
            f_best = fc
        else:
            lam_best = d
            f_best = fd
        if f_best < sign * val_out[x] - POLISH_MIN_GAIN * (1.0 + abs(val_out[x])):
            lam_out[x] = lam_best
            val_out[x] = sign * f_best
    return lam_out, val_out


def _poisson_invert(lam, u):
    p = math.exp(-lam)
    cdf = p
    d = 0
    while u > cdf:
        d += 1
        p = p * lam / d
        cdf += p
        if p == 0.0 and d > lam:
            break
    return d


_poisson_invert_nb = _maybe_njit(_poisson_invert)


def _simulate_loop(lam, behavior_cdf, x0, uniforms):
    n_traj = uniforms.shape[0]
    horizon = uniforms.shape[1]
    n_prices = behavior_cdf.shape[2]
    inventory = np.zeros((n_traj, horizon), dtype=np.int64)
    actions = np.zeros((n_traj, horizon), dtype=np.int64)
    demand = np.zeros((n_traj, horizon), dtype=np.int64)
    for i in range(n_traj):
        x = x0[i]
        for t in range(horizon):
            inventory[i, t] = x
            u_act = uniforms[i, t, 0]
            k = 0
            while k < n_prices - 1 and not u_act < behavior_cdf[t, x, k]:
                k += 1
            actions[i, t] = k
            dem = _poisson_invert_nb(lam[t, k], uniforms[i, t, 1])
            demand[i, t] = dem
            x = x - min(x, dem)
    return inventory, actions, demand


if HAVE_NUMBA:
    q_grid_numba = numba.njit(cache=True)(_q_grid_loop)
    polish_numba = numba.njit(cache=True)(_polish_loop)
    simulate_numba = numba.njit(cache=True)(_simulate_loop)
    poisson_invert_numba = _poisson_invert_nb
else:  # pragma: no cover
    q_grid_numba = _q_grid_loop
    polish_numba = _polish_loop
    simulate_numba = _simulate_loop
    poisson_invert_numba = _poisson_invert


# ---------------------------------------------------------------------------
# vectorised numpy implementations
# ---------------------------------------------------------------------------


def pmf_matrix_numpy(lams, n):
    """P(D = d) for every lam in ``lams`` and d in 0..n-1, shape (len(lams), n)."""
    lams = np.asarray(lams, dtype=float)
    out = np.empty((lams.shape[0], n))
    small = lams < LOG_SPACE_LAMBDA
    if np.any(small):
        ls = lams[small]
        p = np.exp(-ls)
        out[small, 0] = p
        for d in range(1, n):
            p = p * ls / d
            out[small, d] = p
    if not np.all(small):
        from scipy.special import gammaln  # only needed for very large rates

        lb = lams[~small]
        d = np.arange(n)
        out[~small] = np.exp(-lb[:, None] + d[None, :] * np.log(lb)[:, None] - gammaln(d + 1.0)[None, :])
    return out


def q_grid_numpy(lams, price, v_next):
    lams = np.asarray(lams, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    n = v_next.shape[0]
    pmf = pmf_matrix_numpy(lams, n)
    d = np.arange(n)
    cdf = np.cumsum(pmf, axis=1)
    dsum = np.cumsum(pmf * d, axis=1)
    tail = np.clip(1.0 - cdf, 0.0, 1.0)
    sales = dsum + d * tail
    # weights[x, d] = v_next[x - d] for d < x
    diff = d[:, None] - d[None, :]
    weights = np.where(diff > 0, v_next[np.clip(diff, 0, n - 1)], 0.0)
    out = price * sales + pmf @ weights.T + v_next[0] * (tail + pmf)
    out[:, 0] = v_next[0]
    return out


def _q_diag_numpy(lams, price, v_next):
    # Q(x, lams[x]) for every x at once
    full = q_grid_numpy(lams, price, v_next)
    return full[np.arange(lams.shape[0]), np.arange(lams.shape[0])]


def polish_numpy(lo, hi, price, v_next, sign, lam0, val0):
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    lam_out = np.array(lam0, dtype=float)
    val_out = np.array(val0, dtype=float)
    active = hi > lo
    active[0] = False
    if not np.any(active):
        return lam_out, val_out
    a = lo.copy()
    b = hi.copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = sign * _q_diag_numpy(c, price, v_next)
    fd = sign * _q_diag_numpy(d, price, v_next)
    for _ in range(POLISH_ITERS):
        left = fc < fd
        # left: keep [a, d]; right: keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - GOLDEN * (b - a), d)
        new_d = np.where(left, c, a + GOLDEN * (b - a))
        fixed_c = np.where(left, np.nan, fd)
        fixed_d = np.where(left, fc, np.nan)
        probe = np.where(left, new_c, new_d)
        f_probe = sign * _q_diag_numpy(probe, price, v_next)
        fc = np.where(left, f_probe, fixed_c)
        fd = np.where(left, fixed_d, f_probe)
        c, d = new_c, new_d
    lam_best = np.where(fc < fd, c, d)
    f_best = np.minimum(fc, fd)
    better = active & (f_best < sign * val_out - POLISH_MIN_GAIN * (1.0 + np.abs(val_out)))
    lam_out[better] = lam_best[better]
    val_out[better] = sign * f_best[better]
    return lam_out, val_out


def poisson_invert_numpy(lam, u):
    lam = np.broadcast_to(np.asarray(lam, dtype=float), np.shape(u)).copy()
    u = np.asarray(u, dtype=float)
    p = np.exp(-lam)
    cdf = p.copy()
    d = np.zeros(u.shape, dtype=np.int64)
    todo = u > cdf
    while np.any(todo):
        d[todo] += 1
        p[todo] = p[todo] * lam[todo] / d[todo]
        cdf[todo] += p[todo]
        stuck = todo & (p == 0.0) & (d > lam)
        todo = todo & (u > cdf) & ~stuck
    return d


def simulate_numpy(lam, behavior_cdf, x0, uniforms):
    n_traj, horizon = uniforms.shape[:2]
    inventory = np.zeros((n_traj, horizon), dtype=np.int64)
    actions = np.zeros((n_traj, horizon), dtype=np.int64)
    demand = np.zeros((n_traj, horizon), dtype=np.int64)
    x = np.asarray(x0, dtype=np.int64).copy()
    for t in range(horizon):
        inventory[:, t] = x
        rows = behavior_cdf[t, x, :]
        k = np.argmax(uniforms[:, t, 0][:, None] < rows, axis=1)
        actions[:, t] = k
        dem = poisson_invert_numpy(lam[t, k], uniforms[:, t, 1])
        demand[:, t] = dem
        x = x - np.minimum(x, dem)
    return inventory, actions, demand


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def q_grid(lams, price, v_next):
    """Bellman Q(x, a; lam) for every lam in ``lams`` and x in 0..L.

    Returns an array of shape (len(lams), L+1); column 0 is V_next(0).
    """
    lams = np.ascontiguousarray(lams, dtype=float)
    v_next = np.ascontiguousarray(v_next, dtype=float)
    if USE_NUMBA:
        return q_grid_numba(lams, float(price), v_next)
    return q_grid_numpy(lams, price, v_next)


def polish(lo, hi, price, v_next, sign, lam0, val0):
    args = (
        np.ascontiguousarray(lo, dtype=float),
        np.ascontiguousarray(hi, dtype=float),
        float(price),
        np.ascontiguousarray(v_next, dtype=float),
        float(sign),
        np.ascontiguousarray(lam0, dtype=float),
        np.ascontiguousarray(val0, dtype=float),
    )
    if USE_NUMBA:
        return polish_numba(*args)
    return polish_numpy(*args)


def simulate(lam, behavior_cdf, x0, uniforms):
    args = (
        np.ascontiguousarray(lam, dtype=float),
        np.ascontiguousarray(behavior_cdf, dtype=float),
        np.ascontiguousarray(x0, dtype=np.int64),
        np.ascontiguousarray(uniforms, dtype=float),
    )
    if USE_NUMBA:
        return simulate_numba(*args)
    return simulate_numpy(*args)


def poisson_invert(lam, u):
    if USE_NUMBA and np.ndim(u) == 0:
        return int(poisson_invert_numba(float(lam), float(u)))
    return poisson_invert_numpy(lam, u)
