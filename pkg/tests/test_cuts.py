import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from capexp.formulations import build_uc
from capexp.grid import system_from_dict
from capexp.ncd.cuts import (BENDERS_FEASIBILITY, INTEGER_OPTIMALITY, Cut, CutPool, aggregate_gradient_cut,
                             make_benders_feasibility_cut, make_benders_optimality_cut, make_integer_feasibility_cut,
                             make_integer_optimality_cut, make_monotone_cut)
from capexp.scenario import FineScenario
from capexp.solver import INFEASIBLE, ContractError, GE, ModelBuilder, infeasibility_certificate, solve_lp

BINARY2 = [np.array(p, float) for p in itertools.product([0, 1], repeat=2)]


def _toy(z):
    """min 10 y  s.t.  y >= 5 - z, y >= 0, written with rhs(z) = 5 - z."""
    b = ModelBuilder()
    y = b.add_vars(1, cost=10.0)
    b.add_row(y, [1.0], GE, 5.0 - z)
    return b.build()


def test_benders_cut_from_toy_dual():
    m = _toy(0.0)
    res = solve_lp(m)
    assert res.duals[0] == pytest.approx(10.0)
    cut = make_benders_optimality_cut([res.objective], [res.duals], [sp.csr_matrix([[-1.0]])], [0.0], [1.0])
    # theta >= 50 - 10 z
    assert cut.nu == 1.0
    assert cut.rho == pytest.approx([10.0])
    assert cut.rhs == pytest.approx(50.0)
    assert cut.slack([1.0], 40.0) == pytest.approx(0.0)
    assert not cut.satisfied([1.0], 39.0)


def test_benders_cut_ignores_slack_rows():
    b = ModelBuilder()
    y = b.add_vars(1, cost=10.0)
    b.add_row(y, [1.0], GE, 5.0)
    b.add_row(y, [1.0], GE, 1.0)  # slack at the optimum, coupled to z
    res = solve_lp(b.build())
    C = sp.csr_matrix([[0.0], [-1.0]])
    cut = make_benders_optimality_cut([res.objective], [res.duals], [C], [0.0], [1.0])
    assert cut.rho == pytest.approx([0.0])


def test_benders_cut_aggregation():
    C = sp.csr_matrix([[-1.0]])
    cut = make_benders_optimality_cut([50.0, 30.0], [np.array([10.0]), np.array([10.0])], [C, C], [0.0],
                                      [0.5, 0.5])
    assert cut.rhs == pytest.approx(40.0) and cut.rho == pytest.approx([10.0])
    agg = aggregate_gradient_cut(40.0, [-10.0], [0.0])
    assert agg.key() == cut.key()


def test_benders_cut_needs_duals():
    with pytest.raises(ContractError):
        make_benders_optimality_cut([1.0], [None], [sp.csr_matrix([[1.0]])], [0.0], [1.0])


def test_integer_optimality_cut_at_origin():
    cut = make_integer_optimality_cut([0, 0, 0], 5.0)
    assert cut.kind == INTEGER_OPTIMALITY
    assert cut.slack([0, 0, 0], 5.0) == pytest.approx(0.0)
    assert not cut.satisfied([0, 0, 0], 4.0)
    for z in itertools.product([0, 1], repeat=3):
        if any(z):
            assert cut.satisfied(z, 0.0)


def test_integer_optimality_cut_two_assets():
    cut = make_integer_optimality_cut([1, 0], 7.0)
    # theta >= 7 (z1 - z2): 7 at (1,0) and at most 0 at the other three points
    for z in BINARY2:
        bound = cut.rhs - cut.rho @ z
        assert bound == pytest.approx(7 * (z[0] - z[1]))
    with pytest.raises(ContractError):
        make_integer_optimality_cut([1, 0], -1.0)


@given(st.lists(st.floats(0, 1e6), min_size=8, max_size=8), st.integers(0, 7))
def test_integer_optimality_cut_valid_everywhere(values, at):
    points = [np.array(p, float) for p in itertools.product([0, 1], repeat=3)]
    q = dict(zip(map(tuple, points), values))
    cut = make_integer_optimality_cut(points[at], q[tuple(points[at])])
    assert cut.slack(points[at], q[tuple(points[at])]) == pytest.approx(0.0, abs=1e-6)
    for p in points:
        assert cut.satisfied(p, q[tuple(p)])


@given(st.lists(st.floats(0, 1e6), min_size=8, max_size=8), st.integers(0, 7), st.floats(0, 1))
def test_monotone_cut_valid_for_nonincreasing_recourse(values, at, shrink):
    points = [np.array(p, float) for p in itertools.product([0, 1], repeat=3)]
    # make q nonincreasing: q(z) = max over supersets' values, sorted by number of builds
    q = {}
    for p in sorted(points, key=lambda p: -p.sum()):
        supersets = [q[tuple(o)] for o in points if np.all(o >= p) and not np.array_equal(o, p)]
        q[tuple(p)] = max([values[len(q)], *supersets])
    z_hat = points[at]
    bound = shrink * q[tuple(z_hat)]  # any lower bound on the recourse at z_hat
    cut = make_monotone_cut(z_hat, bound)
    for p in points:
        assert cut.satisfied(p, q[tuple(p)])
    assert cut.slack(z_hat, bound) == pytest.approx(0.0, abs=1e-6)


def test_no_good_cut():
    cut = make_integer_feasibility_cut([1, 0, 1])
    assert cut.nu == 0
    for z in itertools.product([0, 1], repeat=3):
        assert cut.satisfied(z, 0.0) == (z != (1, 0, 1))


def _one_bus(penalties):
    doc = {"buses": [{"id": 1, "peak_load": 50}],
           "generators": [{"id": "G", "bus": 1, "existing": True, "kind": "coal", "p_max": 20, "b": 10},
                          {"id": "N", "bus": 1, "existing": False, "kind": "gas", "p_max": 60, "b": 20,
                           "capital_cost": 100}]}
    return system_from_dict(doc, penalties=penalties)


def _flat(system, demand, hours=2):
    return FineScenario(0, 1, "summer-weekday", np.full((1, hours), demand), np.zeros((0, hours)), (), 1.0)


def test_feasibility_cut_one_bus():
    system = _one_bus(penalties=False)
    uc = build_uc(system, [0.0], _flat(system, 50.0))
    assert solve_lp(uc.model).status == INFEASIBLE
    cert = infeasibility_certificate(uc.model)
    cut = make_benders_feasibility_cut(cert, uc.model, uc.rhs0, uc.Cz)
    assert cut.kind == BENDERS_FEASIBILITY and cut.nu == 0
    assert cut.slack([0.0], 0.0) < 0  # generating point is cut off
    assert cut.satisfied([1.0], 0.0)  # building the unit restores feasibility
    assert solve_lp(uc.at([1.0]).model).optimal


def test_feasibility_cut_rejects_bad_certificate():
    system = _one_bus(penalties=False)
    uc = build_uc(system, [0.0], _flat(system, 50.0))
    cert = infeasibility_certificate(uc.model)
    bad = type(cert)(np.zeros_like(cert.ray))
    with pytest.raises(ContractError):
        make_benders_feasibility_cut(bad, uc.model, uc.rhs0, uc.Cz)


def test_penalties_make_recourse_complete():
    system = _one_bus(penalties=True)
    uc = build_uc(system, [0.0], _flat(system, 50.0))
    assert solve_lp(uc.model).optimal


def test_cut_pool_dedup_and_counts():
    pool = CutPool(1)
    a = make_integer_optimality_cut([1, 0], 7.0, node=1)
    assert pool.add(a)
    assert not pool.add(make_integer_optimality_cut([1, 0], 7.0, node=1, iteration=5))
    assert pool.add(make_integer_feasibility_cut([1, 1], node=1))
    assert len(pool) == 2 and pool.count(INTEGER_OPTIMALITY) == 1
    pool.clear()
    assert len(pool) == 0


def test_multicut_slack_uses_its_own_theta():
    cut = Cut(1, INTEGER_OPTIMALITY, np.zeros(2), 1.0, 3.0, theta_index=1)
    assert cut.slack([0, 0], np.array([0.0, 3.0])) == pytest.approx(0.0)
    assert cut.slack([0, 0], np.array([5.0, 0.0])) == pytest.approx(-3.0)
