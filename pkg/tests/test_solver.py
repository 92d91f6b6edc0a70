import numpy as np
import pytest

from dobc.instance import GeneratorConfig, ProblemVariant, generate_instance
from dobc.milp import SolveOptions
from dobc.solution import validate
from dobc.solver import solve_dobc

from conftest import make_instance

EXACT = SolveOptions(gap=1e-9)


def test_end_to_end_tiny_solves_validate():
    for seed in (1, 2, 3):
        inst = generate_instance(GeneratorConfig(n=3, m=2, p=2, seed=seed,
                                                 capacity_class="medium",
                                                 alpha=0.5))
        for text in ("inf-1-P", "inf-2-P", "inf-2-C"):
            variant = ProblemVariant.parse(text)
            res = solve_dobc(inst, variant, EXACT)
            assert res.feasible, (seed, text)
            report = validate(inst, variant, res.solution, res.walk)
            assert report.ok, (seed, text, report.violations)
            # declared objective matches the engine's
            assert res.solution.objective.blended == pytest.approx(
                res.objective, rel=1e-6)


def test_solver_detects_infeasible_capacity():
    inst = generate_instance(GeneratorConfig(n=2, m=1, p=1, seed=4,
                                             capacity_class=0.05))
    # a capacity at the lowest demand quantile cannot serve the peak in one go
    variant = ProblemVariant(pickup_visit_limit=1, topology="P")
    res = solve_dobc(inst, variant, EXACT)
    assert res.status == "infeasible"


def test_deterministic_repeat():
    inst = generate_instance(GeneratorConfig(n=3, m=2, p=1, seed=9,
                                             capacity_class="small", alpha=1.0))
    variant = ProblemVariant(pickup_visit_limit=2, topology="P")
    a = solve_dobc(inst, variant, SolveOptions(gap=1e-9, deterministic=True))
    b = solve_dobc(inst, variant, SolveOptions(gap=1e-9, deterministic=True))
    assert a.objective == b.objective
    assert a.node_count == b.node_count
    assert a.cuts_phase1 == b.cuts_phase1
    assert a.cuts_phase2 == b.cuts_phase2
    assert np.array_equal(a.values, b.values)


def test_cut_log_records_emitted_cuts():
    coords = {"a1": (0.0, 0.0), "a2": (50.0, 0.0), "a3": (100.0, 0.0),
              "b1": (0.0, 10.0), "b2": (100.0, 10.0)}
    inst = make_instance(coords, ["a1", "a2", "a3"], ["b1", "b2"],
                         {"a1": 5, "a2": 5, "a3": 5}, capacity=20, budget=2)
    variant = ProblemVariant(pickup_visit_limit=1, topology="P")
    res = solve_dobc(inst, variant, EXACT, record_cuts=True)
    assert res.feasible
    assert len(res.cut_log) == res.cuts_phase1 + res.cuts_phase2
    for cut, row in res.cut_log:
        assert cut.phase in (1, 2)
        desc = cut.describe(res.model.ext)
        assert desc["S"]


def test_walk_markers_match_variant():
    inst = generate_instance(GeneratorConfig(n=3, m=2, p=2, seed=6,
                                             capacity_class="large", alpha=1.0))
    cyc = solve_dobc(inst, ProblemVariant(pickup_visit_limit=1, topology="C"), EXACT)
    assert cyc.walk.closed
    assert cyc.solution.start is None and cyc.solution.end is None

    path = solve_dobc(inst, ProblemVariant(pickup_visit_limit=1, topology="P"), EXACT)
    if path.solution.start is not None:
        assert not path.walk.closed
        assert path.walk.steps[0].tail[0] == path.solution.start
        assert path.walk.steps[-1].head[0] == path.solution.end
    assert path.objective <= cyc.objective + 1e-9
