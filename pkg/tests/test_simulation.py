import numpy as np
import pytest
from scipy import stats

from offline_pricing.errors import InvalidInputError
from offline_pricing.mdp import Policy, evaluate_policy_exact, price_marginals
from offline_pricing.simulation import (
    OfflineDataset,
    generate_dataset,
    make_suboptimal_policy,
    sample_demand,
    scenario_behavior,
    stream,
    write_manifest,
)


def test_demand_sampler_is_poisson():
    draws = sample_demand(4.0, stream(1), size=50000)
    assert draws.mean() == pytest.approx(4.0, abs=0.05)
    assert draws.var() == pytest.approx(4.0, abs=0.1)
    with pytest.raises(InvalidInputError):
        sample_demand(0.0, stream(1))


def test_streams_are_reproducible_and_independent():
    a = stream(3, 0).random(5)
    assert np.array_equal(a, stream(3, 0).random(5))
    assert not np.array_equal(a, stream(3, 1).random(5)), "replications must not share draws"
    assert not np.array_equal(a, stream(3, 0, 1).random(5)), "evaluation draws differ from data draws"


def test_prefix_stability(model):
    # trajectory i uses the same uniforms whatever N is
    beh = scenario_behavior(model, 1)
    small = generate_dataset(model, beh, 5, stream(8))
    big = generate_dataset(model, beh, 50, stream(8))
    for name in ("inventory", "actions", "demand"):
        assert np.array_equal(getattr(small, name), getattr(big, name)[:5]), name


def test_dynamics_are_consistent(model):
    data = generate_dataset(model, scenario_behavior(model, 1), 300, stream(2))
    assert np.all(data.inventory[:, 0] == model.max_inventory)
    nxt = data.inventory[:, :-1] - np.minimum(data.inventory[:, :-1], data.demand[:, :-1])
    assert np.array_equal(data.inventory[:, 1:], nxt), "stock falls by units sold"
    assert np.all(data.rewards() <= data.inventory * model.prices[data.actions])


@pytest.mark.parametrize("scenario,excluded", [(1, 2), (2, 1), (3, 0)])
def test_scenarios_exclude_one_price(model, scenario, excluded):
    data = generate_dataset(model, scenario_behavior(model, scenario), 200, stream(scenario))
    assert not np.any(data.actions == excluded), f"scenario {scenario} should never post index {excluded}"


def test_action_frequencies_match_behaviour(model):
    beh = scenario_behavior(model, 1)
    data = generate_dataset(model, beh, 6000, stream(4))
    for t in range(model.horizon):
        counts = np.bincount(data.actions[:, t], minlength=3)[:2]
        chi2 = stats.chisquare(counts, f_exp=[data.n / 2, data.n / 2])
        assert chi2.pvalue > 1e-3, f"period {t + 1} price frequencies off: {counts}"


def test_demand_frequencies_match_poisson(model):
    beh = Policy.constant(model.horizon, model.max_inventory, [1.0, 0.0, 0.0])
    data = generate_dataset(model, beh, 8000, stream(5))
    d = data.demand[:, 0]
    observed = np.bincount(np.minimum(d, 12), minlength=13)
    p = stats.poisson.pmf(np.arange(12), 6.0)
    expected = data.n * np.append(p, 1 - p.sum())
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_csv_roundtrip(tmp_path, model):
    data = generate_dataset(model, scenario_behavior(model, 4), 25, stream(9))
    path = tmp_path / "data.csv"
    data.to_csv(path, replication=3)
    back = OfflineDataset.from_csv(path, model.prices, model.max_inventory, replication=3)
    for name in ("inventory", "actions", "demand"):
        assert np.array_equal(getattr(back, name), getattr(data, name)), name
    write_manifest(tmp_path / "m.json", seed=1, scenario=4, n=25, horizon=4)
    assert (tmp_path / "m.json").exists()


def test_suboptimal_policies_remove_their_price(model, optimal):
    for kind, banned in (("I", 2), ("II", 1), ("III", 0)):
        pol = make_suboptimal_policy(model, kind)
        assert np.all(pol.probs[:, :, banned] == 0.0), kind
        drawn = make_suboptimal_policy(model, kind, np.random.default_rng(0))
        assert drawn.deterministic and np.all(drawn.probs[:, :, banned] == 0.0)
    with pytest.raises(InvalidInputError):
        make_suboptimal_policy(model, "IV")


def test_optimal_behaviour_marginals(model, optimal):
    marg = price_marginals(model, scenario_behavior(model, 4))
    assert marg[0, 1] == 1.0, "period one always posts 9 at full stock"
    assert evaluate_policy_exact(model, scenario_behavior(model, 4))[1] == pytest.approx(optimal[1][0, 15])
