"""Shared fixtures: the six-pickup showcase instance and its reference walks."""

from __future__ import annotations

import pytest

from dobc.instance import Arc, DROPOFF, Instance, Node, PICKUP, ProblemVariant
from dobc.solution import ObjectiveBreakdown, Solution, Step, UsedArc, Walk

SHOWCASE_COORDS = {
    "a1": (1.0, 6.0), "a2": (4.0, 6.0), "a3": (6.0, 7.0),
    "a4": (3.0, 4.0), "a5": (5.0, 1.0), "a6": (2.0, 2.0),
    "b1": (2.0, 5.0), "b2": (6.0, 4.0), "b3": (3.0, 1.0),
    "b4": (1.0, 1.0), "b5": (5.0, 3.0),
}


def l1(p, q) -> float:
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


def make_instance(coords, pickups, dropoffs, demands, *, capacity, budget,
                  setup=1.0, eta=1.0, alpha=1.0, max_visits=None,
                  dropoff_dropoff_arcs=False) -> Instance:
    """Complete-graph instance over explicit coordinates with l1 costs."""
    nodes = tuple(Node(id=v, role=PICKUP, xy=coords[v]) for v in pickups) + \
        tuple(Node(id=w, role=DROPOFF, xy=coords[w]) for w in dropoffs)
    ids = list(pickups) + list(dropoffs)
    roles = {v: PICKUP for v in pickups} | {w: DROPOFF for w in dropoffs}
    arcs = []
    for t in ids:
        for h in ids:
            if t == h:
                continue
            if roles[t] == DROPOFF and roles[h] == DROPOFF and not dropoff_dropoff_arcs:
                continue
            cost = l1(coords[t], coords[h])
            arcs.append(Arc(tail=t, head=h, cost=cost, flow_cost=cost / capacity))
    return Instance(
        nodes=nodes,
        demands={v: float(demands[v]) for v in pickups},
        setup_costs={w: setup for w in dropoffs},
        arcs=tuple(arcs),
        capacity=float(capacity),
        budget=float(budget),
        eta=eta,
        alpha=alpha,
        max_visits=max_visits or {v: 1 for v in pickups},
    )


def showcase_instance(capacity=150.0, alpha=1.0, eta=1.0) -> Instance:
    return make_instance(
        SHOWCASE_COORDS,
        pickups=["a1", "a2", "a3", "a4", "a5", "a6"],
        dropoffs=["b1", "b2", "b3", "b4", "b5"],
        demands={v: 50.0 for v in ["a1", "a2", "a3", "a4", "a5", "a6"]},
        capacity=capacity, budget=3.0, eta=eta, alpha=alpha)


def walk_fixture(instance: Instance, variant: ProblemVariant,
                 visits: list) -> tuple[Solution, Walk]:
    """Build (Solution, Walk) from a node sequence with pickup amounts.

    ``visits`` is ``[(node_id, amount-or-None), ...]`` covering the whole
    route; replica indices are assigned in visit order per pickup, loads by
    sequential unloading, and the start/end markers from the endpoints
    (absent when the route closes on itself).
    """
    eff = variant.effective_max_visits(instance)
    counters: dict[str, int] = {}
    refs = []
    for node, amount in visits:
        if instance.is_pickup(node):
            counters[node] = counters.get(node, 0) + 1
            refs.append(((node, counters[node]), amount))
        else:
            refs.append(((node, 1), None))

    steps = []
    load = 0.0
    for (ref, _), (ref2, amount2) in zip(refs, refs[1:]):
        steps.append(Step(tail=ref, head=ref2, load=load,
                          pickup=float(amount2) if amount2 is not None else None))
        if amount2 is not None:
            load += amount2
        else:
            load = 0.0

    splits: dict[str, list[float]] = {}
    for v in instance.pickups:
        splits[v] = [0.0] * eff[v]
    for (node, rep), amount in refs:
        if amount is not None:
            splits[node][rep - 1] = amount / instance.demands[node]

    open_dropoffs = []
    for w in instance.dropoffs:
        if any(ref[0] == w for ref, _ in refs):
            open_dropoffs.append(w)

    closed = refs[0][0] == refs[-1][0]
    start = None if closed else refs[0][0][0]
    end = None if closed else refs[-1][0][0]

    design = sum(instance.arc(s.tail[0], s.head[0]).cost for s in steps)
    flow = sum(instance.arc(s.tail[0], s.head[0]).flow_cost * s.load for s in steps)
    alpha = instance.alpha
    objective = ObjectiveBreakdown(design=design, flow=flow,
                                   blended=alpha * design + (1 - alpha) * flow,
                                   alpha=alpha)

    used = sorted((UsedArc(tail=s.tail, head=s.head, flow=s.load) for s in steps),
                  key=lambda u: (u.tail, u.head))
    active = sorted({ref for ref, _ in refs})
    solution = Solution(open_dropoffs=open_dropoffs, active_replicas=active,
                        used_arcs=used, splits=splits, start=start, end=end,
                        objective=objective)
    return solution, Walk(steps=steps)


# hand-built open walk on the showcase instance, split pickups a2 and a4
OPEN_SPLIT_WALK = [
    ("b1", None), ("a1", 50), ("b1", None), ("a2", 25), ("b2", None),
    ("a3", 50), ("a2", 25), ("a4", 25), ("b2", None), ("a5", 50),
    ("b3", None), ("a6", 50), ("a4", 25), ("b3", None),
]
OPEN_SPLIT_LOADS = [0, 50, 0, 25, 0, 50, 75, 100, 0, 50, 0, 50, 75]

# hand-built walks, one per variant family, keyed by variant spec
VARIANT_WALKS = {
    "inf-2-C": ([("b3", None), ("a6", 50), ("a4", 25), ("b1", None),
                 ("a1", 50), ("a2", 25), ("b2", None), ("a3", 50),
                 ("a2", 25), ("a4", 25), ("b2", None), ("a5", 50),
                 ("b3", None)],
                [0, 50, 75, 0, 50, 75, 0, 50, 75, 100, 0, 50]),
    "inf-1-P": ([("b3", None), ("a6", 50), ("a4", 50), ("b3", None),
                 ("a5", 50), ("b2", None), ("a3", 50), ("b2", None),
                 ("a2", 50), ("a1", 50), ("b1", None)],
                [0, 50, 100, 0, 50, 0, 50, 0, 50, 100]),
    "1-2-P": ([("b1", None), ("a1", 50), ("a2", 50), ("a3", 50),
               ("b2", None), ("a4", 25), ("a5", 50), ("b3", None),
               ("a6", 50), ("a4", 25), ("b1", None)],
              [0, 50, 100, 150, 0, 25, 75, 0, 50, 75]),
    "1-1-C": ([("b1", None), ("a1", 50), ("a2", 50), ("a3", 50),
               ("b2", None), ("a4", 50), ("a5", 50), ("b3", None),
               ("a6", 50), ("b1", None)],
              [0, 50, 100, 150, 0, 50, 100, 0, 50]),
}


@pytest.fixture
def showcase():
    return showcase_instance()


@pytest.fixture
def open_split_fixture(showcase):
    variant = ProblemVariant(pickup_visit_limit=2, topology="P")
    solution, walk = walk_fixture(showcase, variant, OPEN_SPLIT_WALK)
    return showcase, variant, solution, walk
