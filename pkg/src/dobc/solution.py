"""Incumbent decoding: ordered walks, independent validation, exports.

A ``Solution`` is the node/arc level picture (open facilities, active
replicas, arc flows, demand splits); a ``Walk`` is the ordered traversal
with the vehicle load on every arc.  The validator re-checks every problem
requirement directly against the instance, never trusting solver output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .extgraph import ExtendedGraph
from .formulation import CandidatePoint, ModelSpec, objective_terms
from .instance import DROPOFF, PICKUP, Instance, ProblemVariant

NodeRef = tuple[str, int]   # (original id, replica index)


class WalkError(RuntimeError):
    """Raised when used arcs cannot form a single vehicle walk."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class UsedArc:
    tail: NodeRef
    head: NodeRef
    flow: float


@dataclass(frozen=True)
class Step:
    tail: NodeRef
    head: NodeRef
    load: float
    pickup: Optional[float] = None    # amount collected at the head, if any


@dataclass(frozen=True)
class ObjectiveBreakdown:
    design: float
    flow: float
    blended: float
    alpha: float


@dataclass
class Walk:
    steps: list[Step]
    load_mismatches: list[str] = field(default_factory=list)

    @property
    def closed(self) -> bool:
        return bool(self.steps) and self.steps[0].tail == self.steps[-1].head

    def node_sequence(self) -> list[NodeRef]:
        if not self.steps:
            return []
        return [self.steps[0].tail] + [s.head for s in self.steps]

    def max_load(self) -> float:
        return max((s.load for s in self.steps), default=0.0)


@dataclass
class Solution:
    open_dropoffs: list[str]
    active_replicas: list[NodeRef]      # sorted by (id, replica)
    used_arcs: list[UsedArc]            # sorted by (tail, head)
    splits: dict[str, list[float]]      # pickup id -> fraction per replica
    start: Optional[str]
    end: Optional[str]
    objective: ObjectiveBreakdown

    def split_amount(self, node: str, replica: int, instance: Instance) -> float:
        fractions = self.splits.get(node)
        if fractions is None or replica > len(fractions):
            return 0.0
        return fractions[replica - 1] * instance.demands[node]


def solution_from_point(spec: ModelSpec, values: np.ndarray) -> Solution:
    """Threshold an incumbent vector into the node/arc picture."""
    ext = spec.ext
    instance = spec.instance
    point = CandidatePoint(spec.catalog, values)

    used_nodes = {int(v) for v in np.flatnonzero(point.y > 0.5)}
    arc_idx = [int(a) for a in np.flatnonzero(point.x > 0.5)]
    touched = {int(ext.tail[a]) for a in arc_idx} | {int(ext.head[a]) for a in arc_idx}

    open_dropoffs = []
    for w in instance.dropoffs:
        wv = ext.node_index[(w, 1)]
        # an open facility the route never touches is vacuous; drop it
        if wv in used_nodes and wv in touched:
            open_dropoffs.append(w)
    open_set = set(open_dropoffs)

    active: set[NodeRef] = set()
    for v in used_nodes:
        n = ext.nodes[v]
        if n.is_pickup:
            active.add((n.orig, n.replica))
        elif n.orig in open_set:
            active.add((n.orig, 1))

    used_arcs = []
    for a in arc_idx:
        arc = ext.arcs[a]
        t, h = ext.nodes[arc.tail], ext.nodes[arc.head]
        used_arcs.append(UsedArc(tail=(t.orig, t.replica), head=(h.orig, h.replica),
                                 flow=float(point.f[a])))
    used_arcs.sort(key=lambda u: (u.tail, u.head))

    splits: dict[str, list[float]] = {}
    for v in instance.pickups:
        reps = ext.replicas_of[v]
        splits[v] = [float(np.clip(point.q_of(r), 0.0, 1.0)) if r in used_nodes else 0.0
                     for r in reps]

    start = end = None
    if spec.catalog.has_markers:
        for w in instance.dropoffs:
            if point.s_of(w) > 0.5:
                start = w
            if point.e_of(w) > 0.5:
                end = w

    design, flow, blended = objective_terms(spec, np.asarray(values, dtype=float))
    return Solution(open_dropoffs=open_dropoffs,
                    active_replicas=sorted(active),
                    used_arcs=used_arcs, splits=splits, start=start, end=end,
                    objective=ObjectiveBreakdown(design, flow, blended,
                                                 instance.alpha))


def extract_walk(solution: Solution, ext: ExtendedGraph,
                 strict: bool = True) -> Walk:
    """Order the used arcs into one vehicle walk (Hierholzer traversal).

    Starts at the marked start facility when there is one, else at the
    lowest-index open facility with an outgoing arc; ties among unused
    outgoing arcs go to the lowest extended-arc index, so the traversal is
    deterministic.  Raises ``WalkError`` with reason ``"not Eulerian"``,
    ``"disconnected"``, or (in strict mode) ``"load mismatch"``.
    """
    instance = ext.instance
    if not solution.used_arcs:
        return Walk(steps=[])

    refs = []
    for u in solution.used_arcs:
        try:
            t = ext.node_index[u.tail]
            h = ext.node_index[u.head]
        except KeyError:
            raise WalkError("unknown node", f"{u.tail} or {u.head}") from None
        a = ext.arc_pair_index.get((t, h))
        if a is None:
            raise WalkError("unknown node", f"no arc {u.tail}->{u.head}")
        refs.append((t, h, float(u.flow), a))

    seen_pairs = set()
    for t, h, _, _ in refs:
        if (t, h) in seen_pairs:
            raise WalkError("not Eulerian", f"arc used twice: {(t, h)}")
        seen_pairs.add((t, h))

    out_deg: dict[int, int] = {}
    in_deg: dict[int, int] = {}
    adj: dict[int, list[tuple[int, int]]] = {}   # tail -> [(ext arc idx, ref idx)]
    for k, (t, h, fval, a) in enumerate(refs):
        out_deg[t] = out_deg.get(t, 0) + 1
        in_deg[h] = in_deg.get(h, 0) + 1
        adj.setdefault(t, []).append((a, k))
    for items in adj.values():
        items.sort()

    nodes_touched = set(out_deg) | set(in_deg)
    imbalance = {v: out_deg.get(v, 0) - in_deg.get(v, 0) for v in nodes_touched}
    pos = sorted(v for v, d in imbalance.items() if d == 1)
    neg = sorted(v for v, d in imbalance.items() if d == -1)
    others = [v for v, d in imbalance.items() if d not in (-1, 0, 1)]
    if others or len(pos) > 1 or len(neg) > 1 or len(pos) != len(neg):
        raise WalkError("not Eulerian",
                        f"degree imbalance at {[ext.describe(v) for v in others + pos + neg]}")
    for v in pos + neg:
        if ext.nodes[v].is_pickup:
            raise WalkError("not Eulerian",
                            f"imbalanced pickup replica {ext.describe(v)}")

    if solution.start is not None:
        start = ext.node_index[(solution.start, 1)]
        if pos and start != pos[0]:
            raise WalkError("not Eulerian", "start marker is not the imbalanced node")
    elif pos:
        start = pos[0]
    else:
        start = None
        for w in sorted(solution.open_dropoffs,
                        key=lambda w_id: ext.node_index[(w_id, 1)]):
            wv = ext.node_index[(w, 1)]
            if out_deg.get(wv, 0) > 0:
                start = wv
                break
        if start is None:
            start = min(v for v in nodes_touched if out_deg.get(v, 0) > 0)

    # iterative Hierholzer over arcs
    cursor: dict[int, int] = {}
    stack: list[tuple[int, Optional[int]]] = [(start, None)]
    trail: list[int] = []
    while stack:
        v, in_ref = stack[-1]
        items = adj.get(v, [])
        i = cursor.get(v, 0)
        if i < len(items):
            cursor[v] = i + 1
            _, k = items[i]
            stack.append((refs[k][1], k))
        else:
            stack.pop()
            if in_ref is not None:
                trail.append(in_ref)
    trail.reverse()
    if len(trail) != len(refs):
        raise WalkError("disconnected",
                        f"traversed {len(trail)} of {len(refs)} used arcs")

    steps: list[Step] = []
    mismatches: list[str] = []
    running = 0.0
    for k in trail:
        t, h, fval, _ = refs[k]
        if abs(fval - running) > 1e-6 * max(1.0, abs(running)):
            mismatches.append(
                f"load on {ext.describe(t)}->{ext.describe(h)}: "
                f"flow {fval:.6g}, sequential {running:.6g}")
        head_node = ext.nodes[h]
        tail_node = ext.nodes[t]
        if head_node.is_pickup:
            amount = solution.split_amount(head_node.orig, head_node.replica, instance)
            pickup = float(amount)
            running = fval + amount
        else:
            pickup = None
            running = 0.0
        steps.append(Step(tail=(tail_node.orig, tail_node.replica),
                          head=(head_node.orig, head_node.replica),
                          load=fval, pickup=pickup))
    if mismatches and strict:
        raise WalkError("load mismatch", mismatches[0])
    return Walk(steps=steps, load_mismatches=mismatches)


@dataclass
class ValidationReport:
    ok: bool
    violations: list[tuple[str, str]]
    advisories: list[str] = field(default_factory=list)

    def tags(self) -> set[str]:
        return {tag for tag, _ in self.violations}


def validate(instance: Instance, variant: ProblemVariant, solution: Solution,
             walk: Walk) -> ValidationReport:
    """Re-check every requirement from scratch; returns all violations.

    Tolerances: 1e-6 absolute on flow and demand identities, 1e-6 relative
    on costs and capacity.  Inconsistencies between declared flows and
    sequential unloading are advisories, not violations.
    """
    v: list[tuple[str, str]] = []
    advisories = list(walk.load_mismatches)
    rho = instance.capacity

    for i in range(len(walk.steps) - 1):
        if walk.steps[i].head != walk.steps[i + 1].tail:
            v.append(("walk", f"steps {i} and {i + 1} do not chain"))
    seen_arcs = set()
    for s in walk.steps:
        pair = (s.tail, s.head)
        if pair in seen_arcs:
            v.append(("walk", f"arc used twice: {pair}"))
        seen_arcs.add(pair)
        if (s.tail[0], s.head[0]) not in instance.arc_lookup:
            v.append(("walk", f"no such arc in instance: {s.tail[0]}->{s.head[0]}"))

    walk_pairs = {(s.tail, s.head) for s in walk.steps}
    sol_pairs = {(u.tail, u.head) for u in solution.used_arcs}
    if walk_pairs != sol_pairs:
        v.append(("walk", "walk arcs differ from the solution's used arcs"))

    spend = sum(instance.setup_costs.get(w, 0.0) for w in solution.open_dropoffs)
    if spend > instance.budget + 1e-6:
        v.append(("(1)", f"setup spend {spend:.6g} exceeds budget {instance.budget:.6g}"))

    open_set = set(solution.open_dropoffs)
    for s in walk.steps:
        for ref in (s.tail, s.head):
            if instance.roles.get(ref[0]) == DROPOFF and ref[0] not in open_set:
                v.append(("(3)", f"route touches closed drop-off {ref[0]}"))

    eff = variant.effective_max_visits(instance)
    collected: dict[str, float] = {p: 0.0 for p in instance.pickups}
    visits: dict[str, int] = {p: 0 for p in instance.pickups}
    for s in walk.steps:
        node, _rep = s.head
        if instance.roles.get(node) == PICKUP:
            visits[node] += 1
            collected[node] += s.pickup or 0.0
    for p in instance.pickups:
        want = instance.demands[p]
        if abs(collected[p] - want) > 1e-6 * max(1.0, want):
            v.append(("(4)", f"demand not collected: {p} "
                             f"({collected[p]:.6g} of {want:.6g})"))
        if visits[p] < 1:
            v.append(("(5b)", f"pickup never visited: {p}"))
        if visits[p] > eff[p]:
            v.append(("visits", f"pickup {p} visited {visits[p]} times, "
                                f"limit {eff[p]}"))
        fracs = solution.splits.get(p, [])
        if visits[p] and abs(sum(fracs) - 1.0) > 1e-6:
            v.append(("(4)", f"splits of {p} sum to {sum(fracs):.6g}"))

    arrivals: dict[str, int] = {w: 0 for w in instance.dropoffs}
    departures: dict[str, int] = {w: 0 for w in instance.dropoffs}
    intake: dict[str, float] = {w: 0.0 for w in instance.dropoffs}
    for s in walk.steps:
        if instance.roles.get(s.head[0]) == DROPOFF:
            arrivals[s.head[0]] += 1
            intake[s.head[0]] += s.load
        if instance.roles.get(s.tail[0]) == DROPOFF:
            departures[s.tail[0]] += 1
    for w in solution.open_dropoffs:
        count = max(arrivals.get(w, 0), departures.get(w, 0))
        if count < 1:
            v.append(("(9)", f"open drop-off never visited: {w}"))
        elif intake.get(w, 0.0) < instance.eta - 1e-6:
            v.append(("(9)", f"drop-off {w} receives {intake[w]:.6g} < minimum "
                             f"{instance.eta:.6g}"))
        if variant.dropoff_visit_limit == 1 and count > 1:
            v.append(("(k1)", f"drop-off {w} visited {count} times, limit 1"))

    running = 0.0
    for i, s in enumerate(walk.steps):
        if s.load > rho * (1.0 + 1e-6) + 1e-9:
            v.append(("(8a)", f"load {s.load:.6g} exceeds capacity {rho:.6g} "
                              f"on step {i}"))
        if s.load < -1e-6:
            v.append(("(8a)", f"negative load on step {i}"))
        if abs(s.load - running) > 1e-6 * max(1.0, abs(running)):
            advisories.append(f"step {i}: load {s.load:.6g} vs sequential "
                              f"{running:.6g}")
        if instance.roles.get(s.head[0]) == DROPOFF:
            running = 0.0
        else:
            running = s.load + (s.pickup or 0.0)

    if walk.steps:
        first, last = walk.steps[0].tail, walk.steps[-1].head
        if variant.is_cycle and first != last:
            v.append(("(cycle1)", f"route is open ({first[0]} to {last[0]}) "
                                  "but a cycle is required"))
        if instance.roles.get(first[0]) != DROPOFF:
            v.append(("(10)", f"route starts at non-facility {first[0]}"))
        if instance.roles.get(last[0]) != DROPOFF:
            v.append(("(10)", f"route ends at non-facility {last[0]}"))
    elif instance.total_demand() > 0:
        v.append(("walk", "empty route with positive demand"))

    design = 0.0
    flow_cost = 0.0
    for s in walk.steps:
        arc = instance.arc_lookup.get((s.tail[0], s.head[0]))
        if arc is None:
            continue
        design += arc.cost
        flow_cost += arc.flow_cost * s.load
    blended = instance.alpha * design + (1.0 - instance.alpha) * flow_cost
    if abs(blended - solution.objective.blended) > 1e-6 * max(1.0, abs(blended)):
        v.append(("objective", f"declared {solution.objective.blended:.8g} vs "
                               f"recomputed {blended:.8g}"))

    return ValidationReport(ok=not v, violations=v, advisories=advisories)


# -- exports ---------------------------------------------------------------

def export(solution: Solution, walk: Walk, fmt: str,
           instance: Optional[Instance] = None) -> str:
    """Render as ``json`` (round-trips), ``dot``, or ``csv`` (one step per row)."""
    if fmt == "json":
        return _export_json(solution, walk)
    if fmt == "dot":
        return _export_dot(solution, walk, instance)
    if fmt == "csv":
        return _export_csv(walk)
    raise ValueError(f"unknown export format: {fmt!r}")


def _export_json(solution: Solution, walk: Walk) -> str:
    doc = {
        "open_dropoffs": list(solution.open_dropoffs),
        "start": solution.start,
        "end": solution.end,
        "walk": [
            {"from": [s.tail[0], s.tail[1]], "to": [s.head[0], s.head[1]],
             "load": s.load, **({"pickup": s.pickup} if s.pickup is not None else {})}
            for s in walk.steps
        ],
        "splits": {k: list(vv) for k, vv in solution.splits.items()},
        "objective": {
            "design": solution.objective.design,
            "flow": solution.objective.flow,
            "blended": solution.objective.blended,
            "alpha": solution.objective.alpha,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_solution_json(text: str, instance: Instance) -> tuple[Solution, Walk]:
    """Rebuild (Solution, Walk) from the JSON produced by ``export``."""
    doc = json.loads(text)
    steps = [Step(tail=(s["from"][0], int(s["from"][1])),
                  head=(s["to"][0], int(s["to"][1])),
                  load=float(s["load"]),
                  pickup=float(s["pickup"]) if "pickup" in s else None)
             for s in doc["walk"]]
    walk = Walk(steps=steps)
    used = sorted((UsedArc(tail=s.tail, head=s.head, flow=s.load) for s in steps),
                  key=lambda u: (u.tail, u.head))
    active: set[NodeRef] = set()
    for s in steps:
        for ref in (s.tail, s.head):
            if instance.roles.get(ref[0]) == PICKUP:
                active.add(ref)
    for w in doc["open_dropoffs"]:
        active.add((w, 1))
    obj = doc["objective"]
    solution = Solution(
        open_dropoffs=list(doc["open_dropoffs"]),
        active_replicas=sorted(active),
        used_arcs=used,
        splits={k: [float(x) for x in vv] for k, vv in doc["splits"].items()},
        start=doc.get("start"),
        end=doc.get("end"),
        objective=ObjectiveBreakdown(design=float(obj["design"]),
                                     flow=float(obj["flow"]),
                                     blended=float(obj["blended"]),
                                     alpha=float(obj["alpha"])),
    )
    return solution, walk


def _export_dot(solution: Solution, walk: Walk,
                instance: Optional[Instance]) -> str:
    open_set = set(solution.open_dropoffs)
    if instance is not None:
        pickup_ids = list(instance.pickups)
        dropoff_ids = list(instance.dropoffs)
    else:
        dropoff_ids = sorted(open_set)
        pickup_ids = sorted({ref[0] for s in walk.steps for ref in (s.tail, s.head)
                             if ref[0] not in open_set})
    out = io.StringIO()
    out.write("digraph route {\n")
    for p in pickup_ids:
        out.write(f'  "{p}" [shape=circle];\n')
    for w in dropoff_ids:
        style = " style=filled fillcolor=lightgray" if w in open_set else ""
        out.write(f'  "{w}" [shape=box{style}];\n')
    for i, s in enumerate(walk.steps):
        out.write(f'  "{s.tail[0]}" -> "{s.head[0]}" [label="{i + 1}: {s.load:g}"];\n')
    out.write("}\n")
    return out.getvalue()


def _export_csv(walk: Walk) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["step", "from", "from_replica", "to", "to_replica",
                     "load", "pickup"])
    for i, s in enumerate(walk.steps):
        writer.writerow([i + 1, s.tail[0], s.tail[1], s.head[0], s.head[1],
                         f"{s.load:.9g}",
                         "" if s.pickup is None else f"{s.pickup:.9g}"])
    return out.getvalue()
