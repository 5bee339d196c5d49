import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capexp.scenario import (ALL_DAYS, build_scenario_tree, load_profiles, mean_scenario, node_parameters,
                             sample_all, sample_fine_scenarios, select_days, wind_power_curve)


@pytest.mark.parametrize("stages, nodes, leaves", [(1, 1, 1), (3, 7, 4), (6, 63, 32)])
def test_tree_sizes(stages, nodes, leaves):
    tree = build_scenario_tree(stages)
    assert len(tree) == nodes
    assert len(tree.leaves) == leaves
    for t in range(1, stages + 1):
        assert len(tree.stage_nodes(t)) == 2 ** (t - 1)


def test_single_stage_root():
    tree = build_scenario_tree(1)
    root = tree.node(1)
    assert root.parent == 0 and root.probability == 1.0


def test_zero_stages_rejected():
    with pytest.raises(ValueError):
        build_scenario_tree(0)


@given(st.integers(1, 7), st.floats(0.0, 1.0))
def test_stage_probabilities_sum_to_one(stages, p):
    tree = build_scenario_tree(stages, branch_probabilities=[p, 1 - p])
    for t in range(1, stages + 1):
        assert sum(tree.node(n).probability for n in tree.stage_nodes(t)) == pytest.approx(1.0, abs=1e-12)
    for n in tree.ids[1:]:
        nd = tree.node(n)
        parent = tree.node(nd.parent)
        assert nd.probability == pytest.approx(parent.probability * (p if nd.branch == "high" else 1 - p))
        assert nd.demand_multiplier >= parent.demand_multiplier


def test_bad_branch_probabilities():
    with pytest.raises(ValueError):
        build_scenario_tree(2, branch_probabilities=[0.7, 0.7])


def test_node_parameters_examples(sixbus):
    tree = build_scenario_tree(3)
    assets = [a.id for a in sixbus.candidate_assets]
    root = node_parameters(tree, 1, sixbus)
    assert root.capital_cost[assets.index("Wind")] == pytest.approx(75e6)
    high = node_parameters(tree, 2, sixbus)
    coal = sixbus.candidate_assets[assets.index("G4")]
    assert high.capital_cost[assets.index("G4")] / (coal.capacity * 1000) == pytest.approx(945.0)
    twice_high = node_parameters(tree, 4, sixbus)
    assert twice_high.peak_by_bus[sixbus.bus_index(4)] == pytest.approx(158.7)


def test_node_parameters_discount(sixbus):
    tree = build_scenario_tree(2, discount=0.9)
    a = node_parameters(tree, 1, sixbus).capital_cost
    b = node_parameters(tree, 3, sixbus).capital_cost
    assert np.allclose(b, a * 0.95 * 0.9)


def test_wind_curve_examples():
    assert wind_power_curve(2, 100) == 0
    assert wind_power_curve(3, 100) == 0
    assert wind_power_curve(12, 100) == 100
    assert wind_power_curve(25, 100) == 100
    assert wind_power_curve(7.5, 100) == pytest.approx(50)
    with pytest.raises(ValueError):
        wind_power_curve(-1, 100)


@given(st.floats(0, 40), st.floats(0, 40), st.floats(0, 500), st.floats(0, 10))
def test_wind_curve_monotone_and_homogeneous(v1, v2, cap, scale):
    lo, hi = sorted((v1, v2))
    assert wind_power_curve(lo, cap) <= wind_power_curve(hi, cap)
    assert wind_power_curve(v1, scale * cap) == pytest.approx(scale * wind_power_curve(v1, cap))


def _node_day(sixbus, hours=24):
    tree = build_scenario_tree(2)
    day = load_profiles(hours=hours)["summer-weekday"]
    return tree.node(2), day


def test_demand_sample_mean_within_one_percent(sixbus):
    node, day = _node_day(sixbus)
    draws = sample_fine_scenarios(sixbus, node, day, 10_000, seed=11)
    mean = np.mean([s.demand for s in draws], axis=0)
    expected = np.outer([b.peak_load for b in sixbus.buses], day.load_profile) * node.demand_multiplier
    loaded = expected > 0
    assert np.all(np.abs(mean[loaded] / expected[loaded] - 1) < 0.01)
    assert np.all(mean[~loaded] == 0)


def test_sampling_is_bitwise_deterministic(sixbus):
    tree = build_scenario_tree(2, days=select_days(2))
    a = sample_all(sixbus, tree, 5, seed=3, hours=6)
    b = sample_all(sixbus, tree, 5, seed=3, hours=6)
    for key, sa in a.by_node_day.items():
        for x, y in zip(sa, b.by_node_day[key]):
            assert x.demand.tobytes() == y.demand.tobytes()
            assert x.availability.tobytes() == y.availability.tobytes()
    c = sample_all(sixbus, tree, 5, seed=4, hours=6)
    assert not np.array_equal(a.get(1, tree.days[0])[0].demand, c.get(1, tree.days[0])[0].demand)


def test_sampling_order_independent(sixbus):
    node, day = _node_day(sixbus)
    many = sample_fine_scenarios(sixbus, node, day, 6, seed=5)
    few = sample_fine_scenarios(sixbus, node, day, 3, seed=5)
    for x, y in zip(few, many):
        assert np.array_equal(x.demand, y.demand)


def test_solar_zero_at_midnight(sixbus):
    node, day = _node_day(sixbus)
    assert day.solar_profile[0] == 0
    for s in sample_fine_scenarios(sixbus, node, day, 50, seed=1):
        assert s.availability_of("Solar")[0] == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_DAYS), st.integers(1, 24))
def test_scenario_invariants(sixbus, seed, day_name, hours):
    node, _ = _node_day(sixbus)
    day = load_profiles(hours=hours)[day_name]
    for s in sample_fine_scenarios(sixbus, node, day, 3, seed):
        assert s.demand.shape == (len(sixbus.buses), hours)
        assert np.all(s.demand >= 0)
        assert np.all((s.availability >= 0) & (s.availability <= 1))
        assert s.weight == pytest.approx(1 / 3)


def test_mean_scenario(sixbus):
    node, day = _node_day(sixbus, hours=6)
    s = mean_scenario(sixbus, node, day)
    assert s.weight == 1.0
    assert np.allclose(s.demand, np.outer([b.peak_load for b in sixbus.buses], day.load_profile) * 1.15)


def test_select_days():
    assert select_days(1) == ("summer-weekday",)
    assert len(select_days(8)) == 8
    assert select_days("winter-weekend, summer-weekday") == ("winter-weekend", "summer-weekday")
    with pytest.raises(ValueError):
        select_days(9)
    with pytest.raises(ValueError):
        select_days("monday")


def test_reduced_hours_sample_clock_hours():
    day = load_profiles(hours=6)["summer-weekday"]
    assert list(day.hour_index) == [0, 4, 8, 12, 16, 20]
