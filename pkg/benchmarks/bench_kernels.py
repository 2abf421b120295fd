"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py --repeat 5

Also checks that both backends agree before timing anything.
"""

import argparse
import timeit

import numpy as np

from offline_pricing import _kernels
from offline_pricing.mdp import PricingModel, solve_optimal
from offline_pricing.simulation import behavior_cdf, scenario_behavior


def cases(grid, n_traj):
    model = PricingModel.reference()
    v = solve_optimal(model)[1]
    lams = np.linspace(1.0, 10.0, grid)
    cdf = behavior_cdf(scenario_behavior(model, 1))
    x0 = np.full(n_traj, model.max_inventory, dtype=np.int64)
    u = np.random.default_rng(0).random((n_traj, model.horizon, 2))
    lo = np.full(model.n_states, 3.0)
    hi = np.full(model.n_states, 3.02)
    lam0 = np.full(model.n_states, 3.0)
    val0 = _kernels.q_grid_numpy([3.0], 9.0, v[1])[0]
    return {
        "q_grid": (_kernels.q_grid_numba, _kernels.q_grid_numpy, (lams, 9.0, v[1])),
        "polish": (_kernels.polish_numba, _kernels.polish_numpy, (lo, hi, 9.0, v[1], 1.0, lam0, val0)),
        "simulate": (_kernels.simulate_numba, _kernels.simulate_numpy, (model.lam, cdf, x0, u)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=int, default=1001)
    parser.add_argument("--trajectories", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':<10}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (fast, slow, call_args) in cases(args.grid, args.trajectories).items():
        a, b = fast(*call_args), slow(*call_args)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-9, err_msg=name)
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<10}{t_fast:>12.3f}{t_slow:>12.3f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
