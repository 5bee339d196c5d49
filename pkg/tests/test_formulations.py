import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capexp.formulations import (Column, build_extensive, build_rpmp_lr, build_smp, build_tic_node, build_uc,
                                 piecewise_linearize, reserve_rows)
from capexp.grid import ExpansionState, peak_by_region, reserve_margin_slack, system_from_dict
from capexp.ncd.cuts import Cut
from capexp.scenario import (FineScenario, ScenarioSet, build_scenario_tree, load_profiles, node_parameters,
                             sample_all, sample_fine_scenarios)
from capexp.solver import INFEASIBLE, OPTIMAL, solve_lp, solve_milp

from conftest import tiny_instance


def _scenario(system, hours=6, seed=1, node=1):
    tree = build_scenario_tree(2)
    day = load_profiles(hours=hours)["summer-weekday"]
    return sample_fine_scenarios(system, tree.node(node), day, 1, seed)[0]


def _flat_scenario(system, demand, hours):
    ren = system.renewable_generators
    return FineScenario(0, 1, "summer-weekday", np.asarray(demand, float).reshape(len(system.buses), hours),
                        np.full((len(ren), hours), 0.5), tuple(g.id for g in ren), 1.0)


# -- investment node -------------------------------------------------------

def test_tic_root_counts(sixbus):
    tree = build_scenario_tree(1)
    tic = build_tic_node(sixbus, node_parameters(tree, 1, sixbus))
    assert tic.num_binaries == 9
    assert tic.kappa.size == 9


def test_tic_feasible_iff_some_build_covers_reserve(sixbus):
    tree = build_scenario_tree(1)
    params = node_parameters(tree, 1, sixbus)
    res = solve_milp(build_tic_node(sixbus, params).model, gap=0.0)
    assert res.status == OPTIMAL
    assert reserve_margin_slack(sixbus, params.peak_by_region,
                                ExpansionState.from_coverage(sixbus, res.x[:9].round()))[1] >= -1e-6


def test_tic_infeasible_requirement_matches_enumeration(sixbus):
    system = sixbus.with_overrides(reserve_margin=2.0)
    tree = build_scenario_tree(1)
    params = node_parameters(tree, 1, system)
    feasible = [z for z in itertools.product([0, 1], repeat=9)
                if reserve_margin_slack(system, params.peak_by_region, ExpansionState.from_coverage(system, z))[1]
                >= 0]
    assert feasible == []
    assert solve_milp(build_tic_node(system, params).model, gap=0.0).status == INFEASIBLE


def test_tic_optimum_matches_enumeration(sixbus):
    tree = build_scenario_tree(1)
    params = node_parameters(tree, 1, sixbus)
    best = min(float(params.capital_cost @ np.array(z)) for z in itertools.product([0, 1], repeat=9)
               if reserve_margin_slack(sixbus, params.peak_by_region,
                                       ExpansionState.from_coverage(sixbus, z))[1] >= 0)
    res = solve_milp(build_tic_node(sixbus, params).model, gap=0.0)
    assert res.objective == pytest.approx(best)


def test_tic_without_candidates():
    doc = {"buses": [{"id": 1, "peak_load": 10}],
           "generators": [{"id": "G", "bus": 1, "existing": True, "kind": "coal", "p_max": 20}]}
    system = system_from_dict(doc)
    tree = build_scenario_tree(1)
    res = solve_milp(build_tic_node(system, node_parameters(tree, 1, system)).model)
    assert res.status == OPTIMAL and res.objective == 0
    tight = system.with_overrides(reserve_margin=1.5)
    assert solve_milp(build_tic_node(tight, node_parameters(tree, 1, tight)).model).status == INFEASIBLE


# -- piecewise costs -------------------------------------------------------

def test_piecewise_linear_cost_is_one_segment():
    pw = piecewise_linearize(5.0, 12.0, 0.0, 100.0, 4)
    assert pw.segments == 1
    p = np.linspace(0, 100, 11)
    assert np.allclose(pw(p), 5 + 12 * p)


def test_piecewise_exact_at_breakpoints():
    pw = piecewise_linearize(177.0, 13.5, 0.00045, 220.0, 4)
    bp = pw.breakpoints
    assert np.allclose(pw(bp), 177 + 13.5 * bp + 0.00045 * bp ** 2, rtol=0, atol=1e-9)


@given(st.floats(0, 100), st.floats(0, 50), st.floats(1e-5, 1.0), st.floats(1, 500), st.integers(1, 12))
def test_piecewise_error_bound(a, b, c, pmax, k):
    pw = piecewise_linearize(a, b, c, pmax, k)
    assert np.all(np.diff(pw.slopes) >= -1e-9)
    mids = (pw.breakpoints[:-1] + pw.breakpoints[1:]) / 2
    gap = pw(mids) - (a + b * mids + c * mids ** 2)
    assert np.allclose(gap, c * (pmax / k) ** 2 / 4, rtol=1e-6, atol=1e-9)
    p = np.linspace(0, pmax, 37)
    err = pw(p) - (a + b * p + c * p ** 2)
    assert np.all(err >= -1e-7 * (1 + abs(a) + b * pmax + c * pmax ** 2))
    assert np.all(err <= pw.max_error(c) * (1 + 1e-9) + 1e-9)


def test_piecewise_arguments():
    with pytest.raises(ValueError):
        piecewise_linearize(0, 1, -1, 10, 2)
    with pytest.raises(ValueError):
        piecewise_linearize(0, 1, 1, 10, 0)


# -- unit commitment -------------------------------------------------------

@pytest.mark.parametrize("name", ["sixbus.json", "ieee118.json"])
@pytest.mark.parametrize("hours", [1, 4, 24])
def test_uc_binary_count(name, hours):
    from capexp.grid import load_system
    system = load_system(name)
    uc = build_uc(system, None, _scenario(system, hours))
    units = len(system.existing_generators) + len(system.candidate_generators)
    assert uc.num_binaries == 2 * units * hours


def test_uc_unbuilt_candidates_never_commit(sixbus):
    uc = build_uc(sixbus, None, _scenario(sixbus))
    m = uc.model
    alpha = m.var_blocks["alpha"]
    cand = [i for i, g in enumerate(sixbus.unit_generators) if not g.existing]
    c = np.zeros(m.num_vars)
    c[alpha[cand].ravel()] = -1.0  # try to switch them on
    res = solve_lp(m.replace(c=c, offset=0.0))
    assert res.objective == pytest.approx(0.0, abs=1e-9)


def test_uc_shortfall_priced_at_voll(sixbus):
    hours = 3
    demand = np.zeros((len(sixbus.buses), hours))
    demand[sixbus.bus_index(4)] = 1000.0
    uc = build_uc(sixbus, None, _flat_scenario(sixbus, demand, hours))
    res = solve_milp(uc.model, gap=1e-9)
    pen = res.x[uc.index("pen")].sum()
    supply = sum(g.p_max for g in sixbus.existing_generators)
    assert pen >= 3 * (1000 - supply) - 1e-6
    cost_pen = sixbus.voll * pen
    assert res.objective >= cost_pen
    assert res.objective == pytest.approx(cost_pen, rel=0.02)


def test_uc_zero_demand_is_free(sixbus):
    hours = 4
    uc = build_uc(sixbus, np.ones(sixbus.n_candidates),
                  _flat_scenario(sixbus, np.zeros((len(sixbus.buses), hours)), hours))
    res = solve_milp(uc.model, gap=0.0)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    # renewables commit at no cost, so only units with a running or startup cost must stay off
    priced = [i for i, g in enumerate(sixbus.unit_generators) if g.a > 0 or g.startup_cost > 0]
    assert np.allclose(res.x[uc.index("alpha")][priced], 0)


def test_uc_retargeting_matches_rebuild(sixbus):
    sc = _scenario(sixbus, 4)
    z = np.array([1, 0, 1, 0, 1, 0, 0, 1, 0], float)
    base = build_uc(sixbus, None, sc)
    direct = build_uc(sixbus, z, sc)
    assert np.array_equal(base.at(z).model.rhs, direct.model.rhs)
    assert solve_milp(direct.model, gap=0.0).objective <= solve_milp(base.model, gap=0.0).objective + 1e-6


def test_uc_coupling_rows_have_names(sixbus):
    uc = build_uc(sixbus, None, _scenario(sixbus, 2))
    coupled = set(uc.coupling_rows)
    names = {"avail", "capacity_built", "storage_cap", "storage_out", "storage_in", "flow_limit"}
    owned = set(np.concatenate([uc.model.row_blocks[n].ravel() for n in names]))
    assert coupled <= owned
    # rows left out have a zero coefficient: renewable capacity at an hour with no resource
    assert owned - coupled <= set(uc.model.row_blocks["capacity_built"].ravel())


def test_uc_segment_refinement_monotone(sixbus):
    sc = _scenario(sixbus, 4, seed=2)
    z = np.ones(sixbus.n_candidates)
    ref = solve_milp(build_uc(sixbus, z, sc, segments=64).model, gap=0.0).objective
    gaps = [solve_milp(build_uc(sixbus, z, sc, segments=k).model, gap=0.0).objective - ref for k in (1, 2, 4, 8)]
    assert all(g >= -1e-6 for g in gaps)
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))


# -- extensive form --------------------------------------------------------

def test_extensive_upper_binaries(sixbus):
    tree = build_scenario_tree(3)
    ef = build_extensive(sixbus, tree, ScenarioSet())
    assert ef.num_upper_binaries == 63


def test_extensive_without_scenarios_is_pure_expansion(sixbus):
    tree = build_scenario_tree(2)
    res = solve_milp(build_extensive(sixbus, tree, ScenarioSet()).model, gap=0.0)
    params = {n: node_parameters(tree, n, sixbus) for n in tree.ids}
    # enumerate root build sets; each child then buys its cheapest disjoint top-up
    Z = np.array(list(itertools.product([0, 1], repeat=9)), float)
    credit, _ = reserve_rows(sixbus, {})
    ok = {n: Z @ credit[0] >= reserve_rows(sixbus, params[n].peak_by_region)[1][0] - 1e-9 for n in tree.ids}
    best = np.inf
    for z1 in np.flatnonzero(ok[1]):
        total = float(params[1].capital_cost @ Z[z1])
        for n in tree.children(1):
            extra = Z * (1 - Z[z1])  # only assets not yet built
            cover = np.minimum(Z[z1] + extra, 1) @ credit[0] >= reserve_rows(sixbus, params[n].peak_by_region)[1][0]
            total += tree.node(n).probability * float((extra @ params[n].capital_cost)[cover].min())
        best = min(best, total)
    assert res.objective == pytest.approx(best, rel=1e-9)


@pytest.mark.parametrize("seed", [1, 2])
def test_extensive_block_consistency(seed):
    system, tree, sset, _ = tiny_instance(seed, hours=2, scenarios=1)
    ef = build_extensive(system, tree, sset)
    k = system.n_candidates
    params = {n: node_parameters(tree, n, system) for n in tree.ids}
    r = np.random.default_rng(seed)
    builds = {n: np.zeros(k) for n in tree.ids}
    builds[1] = (r.random(k) < 0.5).astype(float)
    builds[2] = ((r.random(k) < 0.5) & (builds[1] == 0)).astype(float)
    lb, ub = ef.model.lb.copy(), ef.model.ub.copy()
    for n in tree.ids:
        lb[ef.x[n]] = ub[ef.x[n]] = builds[n]
    res = solve_milp(ef.model.with_bounds(lb, ub), gap=0.0)
    expected = 0.0
    for n in tree.ids:
        z = sum(builds[m] for m in tree.path(n))
        expected += tree.node(n).probability * float(params[n].capital_cost @ builds[n])
        for d in tree.days:
            for sc in sset.get(n, d):
                uc = build_uc(system, z, sc)
                expected += tree.weight(n) * sc.weight * solve_milp(uc.model, gap=0.0).objective
    if res.status == INFEASIBLE:
        credit_ok = all(
            reserve_margin_slack(system, params[n].peak_by_region,
                                 ExpansionState.from_coverage(system, sum(builds[m] for m in tree.path(n))))[1] >= 0
            for n in tree.ids)
        assert not credit_ok
    else:
        assert res.objective == pytest.approx(expected, rel=1e-6)


def test_extensive_size_guard(ieee118):
    from capexp.formulations import ModelTooLarge
    tree = build_scenario_tree(2)
    sset = sample_all(ieee118, tree, 2, 1, hours=24)
    with pytest.raises(ModelTooLarge, match="limit"):
        build_extensive(ieee118, tree, sset, max_vars=100_000)


# -- restricted master -----------------------------------------------------

def _one_node_system():
    doc = {"buses": [{"id": 1, "peak_load": 10}],
           "generators": [{"id": "G", "bus": 1, "existing": True, "kind": "coal", "p_max": 100},
                          {"id": "N", "bus": 1, "existing": False, "kind": "gas", "p_max": 10,
                           "capital_cost": 100}]}
    return system_from_dict(doc)


def test_rpmp_single_zero_column():
    system = _one_node_system()
    tree = build_scenario_tree(1)
    params = {1: node_parameters(tree, 1, system)}
    mp = build_rpmp_lr(system, tree, params, {1: [Column(1, (0,), (0.0,))]})
    res = solve_lp(mp.model)
    assert res.objective == pytest.approx(0.0)
    assert np.allclose(mp.psi(res.duals, 1), 0) and mp.psi0(res.duals, 1) == pytest.approx(0.0)


def test_rpmp_dominated_column_unused():
    system = _one_node_system()
    tree = build_scenario_tree(1)
    params = {1: node_parameters(tree, 1, system)}
    cols = [Column(1, (0,), (5.0,)), Column(1, (1,), (9.0,))]  # second costs more and needs a build
    mp = build_rpmp_lr(system, tree, params, {1: cols})
    res = solve_lp(mp.model)
    assert mp.weights(res.x)[1] == pytest.approx([1.0, 0.0])
    assert res.objective == pytest.approx(5.0)


def test_rpmp_artificials_signal_unreachable_reserve(sixbus):
    system = sixbus.with_overrides(reserve_margin=2.0)
    tree = build_scenario_tree(1)
    params = {1: node_parameters(tree, 1, system)}
    mp = build_rpmp_lr(system, tree, params, {1: [Column(1, (0,) * 9, (0.0,))]})
    res = solve_lp(mp.model)
    assert mp.artificial_level(res.x) > 0
    assert res.objective >= mp.big_m * mp.artificial_level(res.x) - 1e-6


def test_rpmp_needs_columns(sixbus):
    tree = build_scenario_tree(1)
    with pytest.raises(ValueError):
        build_rpmp_lr(sixbus, tree, {1: node_parameters(tree, 1, sixbus)}, {1: []})


# -- secondary master ------------------------------------------------------

def test_smp_empty_pool():
    smp = build_smp(3, np.zeros(3), 4.0)
    res = solve_milp(smp.model, gap=0.0)
    assert res.objective == pytest.approx(-4.0)
    assert res.x[smp.theta] == pytest.approx([0.0])


def test_smp_single_benders_cut():
    smp = build_smp(1, np.zeros(1), 0.0, [Cut(1, "benders", np.array([10.0]), 1.0, 50.0)])
    res = solve_milp(smp.model, gap=0.0)
    assert res.x[smp.z] == pytest.approx([1.0])
    assert res.x[smp.theta] == pytest.approx([40.0])
    assert res.objective == pytest.approx(40.0)


def test_smp_positive_dual_selects_asset():
    smp = build_smp(3, np.array([0.0, 2.0, 0.0]), 0.0)
    res = solve_milp(smp.model, gap=0.0)
    assert res.x[smp.z][1] == pytest.approx(1.0)
    assert res.objective == pytest.approx(-2.0)
