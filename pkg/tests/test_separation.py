import numpy as np
import pytest

from dobc.extgraph import build_extended
from dobc.formulation import CandidatePoint, build_model
from dobc.instance import ProblemVariant
from dobc.separation import (
    CutCandidate,
    FlowNetwork,
    cut_to_row,
    gomory_hu_tree,
    max_flow,
    separate_phase1,
    separate_phase2,
)

from conftest import OPEN_SPLIT_WALK, make_instance, showcase_instance, walk_fixture


def brute_min_cut(net, s, t):
    best = np.inf
    n = net.n
    for mask in range(1 << n):
        if not (mask >> s) & 1 or (mask >> t) & 1:
            continue
        cap = sum(c for u, v, c in net.edges
                  if ((mask >> u) & 1) != ((mask >> v) & 1))
        best = min(best, cap)
    return best


def test_max_flow_disconnected():
    net = FlowNetwork(n=4, edges=[(0, 1, 3.0), (2, 3, 2.0)])
    value, side = max_flow(net, 0, 3)
    assert value == 0.0
    assert side == {0, 1}


def test_max_flow_bottleneck_path():
    net = FlowNetwork(n=3, edges=[(0, 1, 3.0), (1, 2, 5.0)])
    value, side = max_flow(net, 0, 2)
    assert value == pytest.approx(3.0)
    assert 0 in side and 2 not in side


def test_max_flow_matches_bruteforce():
    rng = np.random.default_rng(21)
    for _ in range(40):
        n = int(rng.integers(3, 11))
        edges = [(u, v, float(rng.integers(0, 7)))
                 for u in range(n) for v in range(u + 1, n)
                 if rng.uniform() < 0.6]
        net = FlowNetwork(n=n, edges=edges)
        s, t = 0, n - 1
        value, side = max_flow(net, s, t)
        assert value == pytest.approx(brute_min_cut(net, s, t))
        crossing = sum(c for u, v, c in net.edges if (u in side) != (v in side))
        assert crossing == pytest.approx(value, abs=1e-9)


def test_gomory_hu_two_nodes_and_star():
    net = FlowNetwork(n=2, edges=[(0, 1, 4.5)])
    tree = gomory_hu_tree(net)
    assert len(tree.edges) == 1
    assert tree.edges[0][2] == pytest.approx(4.5)

    star = FlowNetwork(n=4, edges=[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)])
    tree = gomory_hu_tree(star)
    for u in range(1, 4):
        for v in range(u + 1, 4):
            want = min(u, v)  # spoke capacities are 1, 2, 3
            assert tree.pair_min_cut(u, v) == pytest.approx(float(want))


def test_gomory_hu_matches_all_pairs():
    rng = np.random.default_rng(30)
    for _ in range(25):
        n = int(rng.integers(2, 10))
        edges = [(u, v, float(rng.integers(0, 6)))
                 for u in range(n) for v in range(u + 1, n)
                 if rng.uniform() < 0.7]
        net = FlowNetwork(n=n, edges=edges)
        tree = gomory_hu_tree(net)
        assert len(tree.edges) == n - 1
        for s in range(n):
            for t in range(s + 1, n):
                direct, _ = max_flow(net, s, t)
                assert tree.pair_min_cut(s, t) == pytest.approx(direct)


def _point_from_fixture(instance, variant, visits):
    """Variable vector of a hand-built walk, in catalog order."""
    ext = build_extended(instance, variant)
    spec = build_model(instance, variant, ext)
    solution, walk = walk_fixture(instance, variant, visits)
    values = np.zeros(spec.n_cols)
    cat = spec.catalog
    for step in walk.steps:
        t = ext.node_index[step.tail]
        h = ext.node_index[step.head]
        a = ext.arc_pair_index[(t, h)]
        values[cat.x(a)] = 1.0
        values[cat.f(a)] = step.load
        values[cat.y(t)] = 1.0
        values[cat.y(h)] = 1.0
    for v, fracs in solution.splits.items():
        for i, frac in enumerate(fracs):
            node = ext.node_index[(v, i + 1)]
            if cat.has_q(node):
                values[cat.q(node)] = frac
    if cat.has_markers and solution.start is not None:
        values[cat.s(solution.start)] = 1.0
        values[cat.e(solution.end)] = 1.0
    return spec, CandidatePoint(cat, values)


def test_phase1_accepts_connected_walk(showcase):
    variant = ProblemVariant(pickup_visit_limit=2, topology="P")
    spec, point = _point_from_fixture(showcase, variant, OPEN_SPLIT_WALK)
    assert separate_phase1(showcase, spec.ext, point) == []
    assert separate_phase2(showcase, spec.ext, point) == []


def test_phase1_cuts_two_disjoint_cycles():
    coords = {"a1": (0.0, 0.0), "a2": (10.0, 0.0),
              "b1": (1.0, 1.0), "b2": (11.0, 1.0)}
    inst = make_instance(coords, ["a1", "a2"], ["b1", "b2"],
                         {"a1": 5, "a2": 5}, capacity=10, budget=2)
    variant = ProblemVariant(pickup_visit_limit=1, topology="P")
    ext = build_extended(inst, variant)
    spec = build_model(inst, variant, ext)
    cat = spec.catalog
    values = np.zeros(spec.n_cols)
    for pair in [("a1", "b1"), ("b1", "a1"), ("a2", "b2"), ("b2", "a2")]:
        t = ext.node_index[(pair[0], 1)]
        h = ext.node_index[(pair[1], 1)]
        values[cat.x(ext.arc_pair_index[(t, h)])] = 1.0
        values[cat.y(t)] = 1.0
        values[cat.y(h)] = 1.0
    point = CandidatePoint(cat, values)
    cuts = separate_phase1(inst, ext, point)
    assert len(cuts) == 1
    assert cuts[0].phase == 1
    assert cuts[0].violation == pytest.approx(1.0)   # nu = -1

    cols, coefs, sense, rhs, _ = cut_to_row(cuts[0], ext, cat)
    lhs = float(values[cols] @ coefs)
    assert sense == ">=" and lhs < rhs - 1e-6


def test_phase1_single_component_silent():
    coords = {"a1": (0.0, 0.0), "b1": (1.0, 1.0)}
    inst = make_instance(coords, ["a1"], ["b1"], {"a1": 5}, capacity=10, budget=1)
    variant = ProblemVariant(pickup_visit_limit=1, topology="P")
    ext = build_extended(inst, variant)
    spec = build_model(inst, variant, ext)
    cat = spec.catalog
    values = np.zeros(spec.n_cols)
    for pair in [("a1", "b1"), ("b1", "a1")]:
        t = ext.node_index[(pair[0], 1)]
        h = ext.node_index[(pair[1], 1)]
        values[cat.x(ext.arc_pair_index[(t, h)])] = 1.0
        values[cat.y(t)] = 1.0
        values[cat.y(h)] = 1.0
    point = CandidatePoint(cat, values)
    assert separate_phase1(inst, ext, point) == []


def test_phase2_cuts_split_replicas():
    """Replicas of one pickup in two components: the merged graph is
    connected, so only the exact phase sees the violation."""
    coords = {"a1": (0.0, 0.0), "a2": (10.0, 0.0),
              "b1": (1.0, 1.0), "b2": (11.0, 1.0)}
    inst = make_instance(coords, ["a1", "a2"], ["b1", "b2"],
                         {"a1": 8, "a2": 8}, capacity=10, budget=2,
                         max_visits={"a1": 2, "a2": 1})
    variant = ProblemVariant(topology="C")
    ext = build_extended(inst, variant)
    spec = build_model(inst, variant, ext)
    cat = spec.catalog
    values = np.zeros(spec.n_cols)
    # component 1: b1 <-> a1#1 ; component 2: b2 <-> a1#2, plus a2 rides in 2
    pairs = [(("b1", 1), ("a1", 1)), (("a1", 1), ("b1", 1)),
             (("b2", 1), ("a1", 2)), (("a1", 2), ("a2", 1)),
             (("a2", 1), ("b2", 1))]
    for tail, head in pairs:
        t = ext.node_index[tail]
        h = ext.node_index[head]
        values[cat.x(ext.arc_pair_index[(t, h)])] = 1.0
        values[cat.y(t)] = 1.0
        values[cat.y(h)] = 1.0
    for node, frac in [(("a1", 1), 0.5), (("a1", 2), 0.5), (("a2", 1), 1.0)]:
        values[cat.q(ext.node_index[node])] = frac
    point = CandidatePoint(cat, values)

    assert separate_phase1(inst, ext, point) == []
    cuts = separate_phase2(inst, ext, point)
    assert len(cuts) >= 1
    top = cuts[0]
    assert top.phase == 2
    assert top.violation == pytest.approx(1.0)       # mu = -1
    assert top.witnesses is not None
    cols, coefs, sense, rhs, _ = cut_to_row(top, ext, cat)
    assert float(values[cols] @ coefs) < rhs - 1e-6


def test_phase2_silent_on_connected_walk(showcase):
    variant = ProblemVariant(pickup_visit_limit=1, topology="C")
    visits = [("b1", None), ("a1", 50), ("a2", 50), ("a3", 50), ("b2", None),
              ("a4", 50), ("a5", 50), ("b3", None), ("a6", 50), ("b1", None)]
    inst = showcase_instance(capacity=150.0)
    spec, point = _point_from_fixture(inst, variant, visits)
    assert separate_phase2(inst, spec.ext, point) == []


def test_cycle_variant_cut_has_no_marker_columns():
    coords = {"a1": (0.0, 0.0), "a2": (10.0, 0.0),
              "b1": (1.0, 1.0), "b2": (11.0, 1.0)}
    inst = make_instance(coords, ["a1", "a2"], ["b1", "b2"],
                         {"a1": 5, "a2": 5}, capacity=10, budget=2)
    variant = ProblemVariant(pickup_visit_limit=1, topology="C")
    ext = build_extended(inst, variant)
    spec = build_model(inst, variant, ext)
    cat = spec.catalog
    values = np.zeros(spec.n_cols)
    for pair in [("a1", "b1"), ("b1", "a1"), ("a2", "b2"), ("b2", "a2")]:
        t = ext.node_index[(pair[0], 1)]
        h = ext.node_index[(pair[1], 1)]
        values[cat.x(ext.arc_pair_index[(t, h)])] = 1.0
        values[cat.y(t)] = 1.0
        values[cat.y(h)] = 1.0
    point = CandidatePoint(cat, values)
    cuts = separate_phase2(inst, ext, point)
    assert cuts, "disconnected integral point must be cut"
    cols, coefs, sense, rhs, _ = cut_to_row(cuts[0], ext, cat)
    # columns reference only arc usage and witness binaries (no markers)
    assert all(col < cat.q_offset for col in cols)
    # and the inequality reads sum(x over cut) >= y_v + y_v' - 1
    assert rhs == -1.0


def test_flow_network_merges_parallel_edges():
    net = FlowNetwork(n=3, edges=[(0, 1, 1.0), (1, 0, 2.0), (1, 2, 1.0)])
    caps = {(u, v): c for u, v, c in net.edges}
    assert caps[(0, 1)] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        FlowNetwork(n=2, edges=[(0, 1, -1.0)])
