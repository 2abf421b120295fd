import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offline_pricing.errors import InvalidInputError
from offline_pricing.mdp import (
    Policy,
    PricingModel,
    argmax_high,
    argmin_high,
    bellman_q,
    evaluate_policy_exact,
    expected_sales,
    forward_state_distribution,
    poisson_pmf_prefix,
    price_marginals,
    solve_optimal,
    solve_worst,
    transition_matrix,
)
from offline_pricing.simulation import evaluate_policy_mc, stream


def factorial_pmf(lam, d):
    return math.exp(-lam) * lam**d / math.factorial(d)


def brute_q(x, price, lam, v_next, cutoff=200):
    # direct sum over demand, no tail shortcut
    total = 0.0
    for d in range(cutoff):
        p = factorial_pmf(lam, d) if d < 150 else 0.0
        sold = min(d, x)
        total += p * (price * sold + v_next[x - sold])
    return total


def test_pmf_matches_factorial_formula():
    pmf, tail = poisson_pmf_prefix(3.7, 12)
    expected = [factorial_pmf(3.7, d) for d in range(13)]
    np.testing.assert_allclose(pmf, expected, rtol=1e-13)
    assert tail == pytest.approx(1.0 - sum(expected), abs=1e-14), "tail should be the complement"


def test_pmf_large_rate_stays_finite():
    pmf, tail = poisson_pmf_prefix(900.0, 950)
    assert np.all(np.isfinite(pmf)), "log-space branch must avoid underflow to nan"
    assert pmf[900] == pytest.approx(0.013297, rel=1e-3), "mode of Poisson(900) is about 1/sqrt(2 pi 900)"


def test_expected_sales_limits():
    assert expected_sales(2.0, 0) == 0.0
    assert expected_sales(2.0, 1) == pytest.approx(1 - math.exp(-2.0)), "E[min(D,1)] = P(D >= 1)"
    assert expected_sales(2.0, 60) == pytest.approx(2.0, abs=1e-12), "large stock sells the mean"


@settings(max_examples=60, deadline=None)
@given(
    x=st.integers(0, 20),
    price=st.floats(0.5, 30.0),
    lam=st.floats(0.2, 15.0),
    seed=st.integers(0, 10_000),
)
def test_bellman_q_matches_brute_force(x, price, lam, seed):
    v_next = np.random.default_rng(seed).normal(0.0, 10.0, 21)
    assert bellman_q(x, price, lam, v_next) == pytest.approx(brute_q(x, price, lam, v_next), rel=1e-10, abs=1e-10)


def test_bellman_rejects_bad_rate():
    with pytest.raises(InvalidInputError):
        bellman_q(2, 1.0, -1.0, np.zeros(3))
    with pytest.raises(InvalidInputError):
        bellman_q(2, 1.0, float("nan"), np.zeros(3))


def test_model_validation():
    with pytest.raises(InvalidInputError):
        PricingModel(2, 5, [9.0, 8.0], [4.0, 5.0], 1.0, 10.0)  # prices not increasing
    with pytest.raises(InvalidInputError):
        PricingModel(2, 5, [8.0, 9.0], [4.0, 5.0], 1.0, 10.0)  # rates increase with price
    with pytest.raises(InvalidInputError):
        PricingModel(2, 5, [8.0, 9.0], [12.0, 5.0], 1.0, 10.0)  # rate above lambda_max


def test_model_json_roundtrip(tmp_path, model):
    path = tmp_path / "model.json"
    model.to_json(path)
    back = PricingModel.from_json(path)
    assert np.array_equal(back.lam, model.lam) and back.max_inventory == model.max_inventory


def test_policy_rows_must_sum_to_one():
    probs = np.full((1, 2, 2), 0.5)
    Policy(probs)
    probs[0, 0, 0] = 0.6
    with pytest.raises(InvalidInputError):
        Policy(probs)


def test_tie_rules():
    vals = np.array([[1.0, 3.0, 3.0], [2.0, 2.0, 0.0]])
    assert argmax_high(vals).tolist() == [2, 1], "argmax ties go to the higher price"
    assert argmin_high(np.array([[0.0, 0.0, 1.0]])).tolist() == [1], "argmin ties go to the higher price"


def test_optimal_value_and_known_cells(model, optimal):
    q, v, policy = optimal
    acts = model.prices[policy.actions()]
    assert acts[1, 9] == 9 and acts[2, 10] == 8 and acts[0, 15] == 9, "spot checks of the reference policy"
    assert v[0, 15] == pytest.approx(128.5857524622967, abs=1e-9)
    assert np.all(v[:, 0] == 0.0), "no stock, no revenue"
    assert np.all(v[-1] == 0.0), "terminal row is zero"


def test_exact_evaluation_of_optimal_equals_dp(model, optimal):
    v_eval, value = evaluate_policy_exact(model, optimal[2])
    np.testing.assert_allclose(v_eval, optimal[1], atol=1e-12)


def test_exact_evaluation_matches_monte_carlo(model, optimal):
    mean, se = evaluate_policy_mc(model, optimal[2], 40000, stream(5, 0, 1))
    exact = optimal[1][0, model.max_inventory]
    assert abs(mean - exact) < 4 * se, f"MC {mean:.3f}±{se:.3f} vs exact {exact:.3f}"


def test_worst_policy_is_no_better_than_any_constant(model):
    worst = evaluate_policy_exact(model, solve_worst(model))[1]
    for k in range(model.n_prices):
        const = Policy.constant(model.horizon, model.max_inventory, np.eye(model.n_prices)[k])
        assert worst <= evaluate_policy_exact(model, const)[1] + 1e-12


def test_transition_rows_and_state_distribution(model, optimal):
    for t in range(model.horizon):
        for k in range(model.n_prices):
            mat = transition_matrix(model, t, k)
            np.testing.assert_allclose(mat.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(np.tril(mat, -1) >= 0) and np.all(np.triu(mat, 1) == 0), "stock never increases"
    dist = forward_state_distribution(model, optimal[2])
    np.testing.assert_allclose(dist.sum(axis=1), 1.0, atol=1e-12)
    marg = price_marginals(model, optimal[2])
    np.testing.assert_allclose(marg.sum(axis=1), 1.0, atol=1e-12)


def test_state_distribution_matches_simulation(model, optimal):
    from offline_pricing.simulation import generate_dataset

    data = generate_dataset(model, optimal[2], 40000, stream(6))
    dist = forward_state_distribution(model, optimal[2])
    for t in range(model.horizon):
        freq = np.bincount(data.inventory[:, t], minlength=model.n_states) / data.n
        assert np.max(np.abs(freq - dist[t])) < 0.015, f"period {t + 1} stock law off"


def test_single_price_model_has_constant_policy():
    m = PricingModel(3, 4, [5.0], [2.0], 1.0, 10.0)
    assert np.all(solve_optimal(m)[2].actions() == 0)
