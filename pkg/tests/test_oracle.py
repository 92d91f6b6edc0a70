import numpy as np
import pytest

from dobc.instance import GeneratorConfig, ProblemVariant, generate_instance, min_required_visits
from dobc.milp import SolveOptions
from dobc.oracle import OracleError, solve_exhaustive_11c, solve_full_enumeration

from conftest import VARIANT_WALKS, make_instance, showcase_instance, walk_fixture

EXACT = SolveOptions(gap=1e-9)


def one_pickup_one_dropoff(demand=60.0, capacity=100.0):
    coords = {"a1": (0.0, 0.0), "b1": (2.0, 1.0)}
    return make_instance(coords, ["a1"], ["b1"], {"a1": demand},
                         capacity=capacity, budget=1)


def test_forced_route_objective():
    inst = one_pickup_one_dropoff()
    variant = ProblemVariant(pickup_visit_limit=1, topology="C")
    res = solve_full_enumeration(inst, variant, EXACT)
    there = inst.arc("b1", "a1").cost
    back = inst.arc("a1", "b1").cost
    assert res.status == "optimal"
    assert res.objective == pytest.approx(there + back)


def test_two_pickups_best_visiting_order():
    coords = {"a1": (0.0, 0.0), "a2": (4.0, 1.0), "b1": (1.0, 3.0)}
    inst = make_instance(coords, ["a1", "a2"], ["b1"], {"a1": 10, "a2": 10},
                         capacity=50, budget=1)
    variant = ProblemVariant(pickup_visit_limit=1, topology="C")
    res = solve_full_enumeration(inst, variant, EXACT)
    order1 = (inst.arc("b1", "a1").cost + inst.arc("a1", "a2").cost
              + inst.arc("a2", "b1").cost)
    order2 = (inst.arc("b1", "a2").cost + inst.arc("a2", "a1").cost
              + inst.arc("a1", "b1").cost)
    assert res.objective == pytest.approx(min(order1, order2))


def test_undersized_visit_budget_is_infeasible():
    inst = one_pickup_one_dropoff(demand=90.0, capacity=40.0)
    need = min_required_visits(inst)
    assert need == 3
    res = solve_full_enumeration(
        inst, ProblemVariant(pickup_visit_limit=need - 1, topology="P"), EXACT)
    assert res.status == "infeasible"
    res_ok = solve_full_enumeration(
        inst, ProblemVariant(pickup_visit_limit=need, topology="P"), EXACT)
    assert res_ok.status == "optimal"


def test_enumeration_cap():
    inst = showcase_instance()
    with pytest.raises(OracleError):
        solve_full_enumeration(inst, ProblemVariant(pickup_visit_limit=2),
                               max_nodes=12)


def test_exhaustive_11c_upper_bounded_by_reference_walk():
    inst = showcase_instance(capacity=150.0, alpha=1.0)
    res = solve_exhaustive_11c(inst, max_dropoffs=5)
    assert res.feasible
    visits, _ = VARIANT_WALKS["1-1-C"]
    variant = ProblemVariant.parse("1-1-C")
    solution, walk = walk_fixture(inst, variant, visits)
    assert res.objective <= solution.objective.blended + 1e-9


def test_exhaustive_11c_infeasible_when_demand_exceeds_capacity():
    inst = one_pickup_one_dropoff(demand=120.0, capacity=100.0)
    res = solve_exhaustive_11c(inst)
    assert not res.feasible


def test_exhaustive_11c_budget_binds_facility_count():
    coords = {"a1": (0.0, 0.0), "a2": (6.0, 0.0),
              "b1": (1.0, 1.0), "b2": (5.0, 1.0)}
    inst = make_instance(coords, ["a1", "a2"], ["b1", "b2"],
                         {"a1": 30, "a2": 30}, capacity=100, budget=1.0)
    res = solve_exhaustive_11c(inst)
    assert res.feasible
    assert len(res.facilities) == 1


def test_exhaustive_11c_caps():
    inst = showcase_instance()
    with pytest.raises(OracleError):
        solve_exhaustive_11c(inst)          # five drop-offs, default cap four


def test_exhaustive_matches_enumeration_on_11c():
    rng = np.random.default_rng(2024)
    agree = 0
    for trial in range(12):
        cfg = GeneratorConfig(n=int(rng.integers(2, 4)), m=int(rng.integers(1, 3)),
                              p=1 + int(rng.integers(0, 1)),
                              capacity_class="large", alpha=1.0,
                              seed=int(rng.integers(0, 10_000)))
        cfg = GeneratorConfig(n=cfg.n, m=min(cfg.m, cfg.n), p=min(cfg.p, min(cfg.m, cfg.n)),
                              capacity_class="large", alpha=1.0, seed=cfg.seed)
        inst = generate_instance(cfg)
        variant = ProblemVariant.parse("1-1-C")
        full = solve_full_enumeration(inst, variant, EXACT)
        brute = solve_exhaustive_11c(inst)
        assert full.feasible == brute.feasible
        if full.feasible:
            assert full.objective == pytest.approx(brute.objective, rel=1e-6)
            agree += 1
    assert agree >= 6


def test_enumeration_agrees_with_lazy_solver_spot_check():
    from dobc.solver import solve_dobc
    inst = generate_instance(GeneratorConfig(n=3, m=2, p=2, seed=77,
                                             capacity_class="medium", alpha=0.5))
    for text in ("inf-1-P", "inf-2-C", "1-1-C"):
        variant = ProblemVariant.parse(text)
        full = solve_full_enumeration(inst, variant, EXACT)
        lazy = solve_dobc(inst, variant, EXACT)
        assert full.feasible == lazy.feasible
        if full.feasible:
            assert lazy.objective == pytest.approx(full.objective, rel=1e-6)
