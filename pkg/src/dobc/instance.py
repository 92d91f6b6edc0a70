"""Problem data model: instances, solve variants, random generation, JSON I/O.

An instance is a directed graph whose nodes are either pickup points (each
carrying a demand that must be collected in full, possibly over several
visits) or candidate drop-off facilities (each with a setup cost charged
against a shared budget).  Arcs carry a strictly positive traversal cost and
a nonnegative per-unit flow cost.  A single vehicle of capacity ``capacity``
services everything; ``alpha`` blends traversal cost against flow cost in
the objective.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

PICKUP = "pickup"
DROPOFF = "dropoff"


class InstanceError(ValueError):
    """Malformed instance document, config, or variant."""


class InstanceValidationError(InstanceError):
    """Carries the full list of violated invariants, one message each."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid instance: " + "; ".join(self.problems))


@dataclass(frozen=True)
class Node:
    id: str
    role: str
    xy: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Arc:
    tail: str
    head: str
    cost: float        # traversal cost, > 0
    flow_cost: float   # cost per unit carried, >= 0


@dataclass(frozen=True)
class Instance:
    """Immutable problem instance.

    ``demands`` is keyed exactly by pickup node ids, ``setup_costs`` and the
    budget apply to drop-off nodes, and ``max_visits`` bounds how many times
    each pickup may appear on the route.  Instances are safe to share across
    concurrent solves.
    """

    nodes: tuple[Node, ...]
    demands: Mapping[str, float]
    setup_costs: Mapping[str, float]
    arcs: tuple[Arc, ...]
    capacity: float
    budget: float
    eta: float = 0.0
    alpha: float = 1.0
    max_visits: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "demands", dict(self.demands))
        object.__setattr__(self, "setup_costs", dict(self.setup_costs))
        visits = dict(self.max_visits)
        if not visits:
            visits = {n.id: 1 for n in self.nodes if n.role == PICKUP}
        object.__setattr__(self, "max_visits", visits)
        problems = self._check()
        if problems:
            raise InstanceValidationError(problems)

    # -- validation ------------------------------------------------------

    def _check(self) -> list[str]:
        problems: list[str] = []
        seen = set()
        for n in self.nodes:
            if n.id in seen:
                problems.append(f"duplicate node id: {n.id}")
            seen.add(n.id)
            if n.role not in (PICKUP, DROPOFF):
                problems.append(f"unknown node role: {n.id}={n.role!r}")

        pickups = {n.id for n in self.nodes if n.role == PICKUP}
        dropoffs = {n.id for n in self.nodes if n.role == DROPOFF}
        if not pickups:
            problems.append("empty pickup set")

        for v in pickups:
            if v not in self.demands:
                problems.append(f"missing demand: {v}")
        for v, d in self.demands.items():
            if v not in pickups:
                problems.append(f"demand on non-pickup node: {v}")
            elif d < 0:
                problems.append(f"negative demand: {v}")

        for w in dropoffs:
            if w not in self.setup_costs:
                problems.append(f"missing setup cost: {w}")
        for w, f in self.setup_costs.items():
            if w not in dropoffs:
                problems.append(f"setup cost on non-drop-off node: {w}")
            elif f < 0:
                problems.append(f"negative setup cost: {w}")

        for v in pickups:
            if v not in self.max_visits:
                problems.append(f"missing max visits: {v}")
        for v, m in self.max_visits.items():
            if v not in pickups:
                problems.append(f"max visits on non-pickup node: {v}")
            elif m < 1:
                problems.append(f"max visits below one: {v}")

        seen_arcs = set()
        for a in self.arcs:
            key = (a.tail, a.head)
            if a.tail == a.head:
                problems.append(f"self-loop arc: ({a.tail},{a.head})")
            if a.tail not in seen or a.head not in seen:
                problems.append(f"unknown arc endpoint: ({a.tail},{a.head})")
            if key in seen_arcs:
                problems.append(f"duplicate arc: ({a.tail},{a.head})")
            seen_arcs.add(key)
            if a.cost <= 0:
                problems.append(f"non-positive arc cost: ({a.tail},{a.head})")
            if a.flow_cost < 0:
                problems.append(f"negative arc flow cost: ({a.tail},{a.head})")

        if self.capacity <= 0:
            problems.append("non-positive capacity")
        if self.budget < 0:
            problems.append("negative budget")
        if self.eta < 0:
            problems.append("negative eta")
        if not (0.0 <= self.alpha <= 1.0):
            problems.append("alpha out of range")
        return problems

    # -- derived lookups -------------------------------------------------

    @cached_property
    def pickups(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.role == PICKUP)

    @cached_property
    def dropoffs(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.role == DROPOFF)

    @cached_property
    def node_order(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def roles(self) -> dict[str, str]:
        return {n.id: n.role for n in self.nodes}

    @cached_property
    def arc_lookup(self) -> dict[tuple[str, str], Arc]:
        return {(a.tail, a.head): a for a in self.arcs}

    def arc(self, tail: str, head: str) -> Arc:
        try:
            return self.arc_lookup[(tail, head)]
        except KeyError:
            raise InstanceError(f"no arc ({tail},{head}) in instance") from None

    def is_pickup(self, node_id: str) -> bool:
        return self.roles[node_id] == PICKUP

    def total_demand(self) -> float:
        return float(sum(self.demands.values()))


@dataclass(frozen=True)
class ProblemVariant:
    """Which member of the problem family to solve.

    ``dropoff_visit_limit`` is ``None`` (unbounded) or ``1``.
    ``pickup_visit_limit`` is either the string ``"per-node"`` (use the
    instance's per-node ``max_visits``) or a uniform positive integer that
    overrides them all.  ``topology`` is ``"C"`` (the route must close into
    a cycle) or ``"P"`` (an open walk is acceptable, a cycle still is).
    """

    dropoff_visit_limit: Optional[int] = None
    pickup_visit_limit: Union[int, str] = "per-node"
    topology: str = "P"
    forbid_dropoff_to_dropoff_arcs: bool = True
    use_cardinality_budget: bool = False

    def __post_init__(self):
        if self.dropoff_visit_limit not in (None, 1):
            raise InstanceError("dropoff_visit_limit must be 1 or None (unbounded)")
        kp = self.pickup_visit_limit
        if isinstance(kp, str):
            if kp != "per-node":
                raise InstanceError(f"bad pickup_visit_limit: {kp!r}")
        elif not (isinstance(kp, int) and kp >= 1):
            raise InstanceError(f"bad pickup_visit_limit: {kp!r}")
        if self.topology not in ("C", "P"):
            raise InstanceError(f"topology must be 'C' or 'P', got {self.topology!r}")

    @property
    def is_cycle(self) -> bool:
        return self.topology == "C"

    def effective_max_visits(self, instance: Instance) -> dict[str, int]:
        if self.pickup_visit_limit == "per-node":
            return {v: int(instance.max_visits[v]) for v in instance.pickups}
        return {v: int(self.pickup_visit_limit) for v in instance.pickups}

    def check_against(self, instance: Instance) -> None:
        """Raise if the variant cannot be applied to this instance."""
        if self.use_cardinality_budget:
            costs = [instance.setup_costs[w] for w in instance.dropoffs]
            if not costs:
                raise InstanceError("cardinality budget needs at least one drop-off")
            if any(c != costs[0] for c in costs):
                raise InstanceError("cardinality budget requires equal setup costs")
            if costs[0] <= 0:
                raise InstanceError("cardinality budget requires positive setup costs")

    def label(self) -> str:
        kd = "1" if self.dropoff_visit_limit == 1 else "inf"
        kp = self.pickup_visit_limit
        kp = "pn" if kp == "per-node" else str(kp)
        return f"({kd},{kp})-{self.topology}"

    @classmethod
    def parse(cls, text: str, **kwargs) -> "ProblemVariant":
        """Parse compact specs like ``"1-2-C"`` or ``"inf-per-node-P"``."""
        parts = text.replace(",", "-").replace(":", "-").split("-")
        if len(parts) < 3:
            raise InstanceError(f"bad variant spec {text!r}, want kd-kp-T")
        kd_s, topo = parts[0], parts[-1]
        kp_s = "-".join(parts[1:-1])
        kd = None if kd_s.lower() in ("inf", "none", "*") else int(kd_s)
        kp: Union[int, str] = kp_s if kp_s == "per-node" else int(kp_s)
        return cls(dropoff_visit_limit=kd, pickup_visit_limit=kp,
                   topology=topo.upper(), **kwargs)


# -- serialization -------------------------------------------------------

_TOP_KEYS = {"nodes", "demands", "setup_costs", "arcs", "capacity",
             "budget", "eta", "alpha", "max_visits"}
_NODE_KEYS = {"id", "role", "xy"}
_ARC_KEYS = {"from", "to", "c", "cf"}


def instance_to_dict(instance: Instance) -> dict:
    nodes = []
    for n in instance.nodes:
        rec: dict = {"id": n.id, "role": n.role}
        if n.xy is not None:
            rec["xy"] = [float(n.xy[0]), float(n.xy[1])]
        nodes.append(rec)
    return {
        "nodes": nodes,
        "demands": {v: float(d) for v, d in instance.demands.items()},
        "setup_costs": {w: float(f) for w, f in instance.setup_costs.items()},
        "arcs": [{"from": a.tail, "to": a.head, "c": float(a.cost),
                  "cf": float(a.flow_cost)} for a in instance.arcs],
        "capacity": float(instance.capacity),
        "budget": float(instance.budget),
        "eta": float(instance.eta),
        "alpha": float(instance.alpha),
        "max_visits": {v: int(m) for v, m in instance.max_visits.items()},
    }


def instance_to_json(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise InstanceError(f"unknown instance keys: {sorted(unknown)}")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise InstanceError(f"missing instance keys: {sorted(missing)}")

    nodes = []
    for rec in doc["nodes"]:
        if not isinstance(rec, dict):
            raise InstanceError("node records must be objects")
        bad = set(rec) - _NODE_KEYS
        if bad:
            raise InstanceError(f"unknown node keys: {sorted(bad)}")
        xy = rec.get("xy")
        if xy is not None:
            if not (isinstance(xy, (list, tuple)) and len(xy) == 2):
                raise InstanceError(f"node {rec.get('id')!r}: xy must be [x, y]")
            xy = (float(xy[0]), float(xy[1]))
        nodes.append(Node(id=str(rec["id"]), role=str(rec["role"]), xy=xy))

    arcs = []
    for rec in doc["arcs"]:
        if not isinstance(rec, dict):
            raise InstanceError("arc records must be objects")
        bad = set(rec) - _ARC_KEYS
        if bad:
            raise InstanceError(f"unknown arc keys: {sorted(bad)}")
        for k in _ARC_KEYS:
            if k not in rec:
                raise InstanceError(f"arc record missing key {k!r}")
        arcs.append(Arc(tail=str(rec["from"]), head=str(rec["to"]),
                        cost=float(rec["c"]), flow_cost=float(rec["cf"])))

    return Instance(
        nodes=tuple(nodes),
        demands={str(k): float(v) for k, v in doc["demands"].items()},
        setup_costs={str(k): float(v) for k, v in doc["setup_costs"].items()},
        arcs=tuple(arcs),
        capacity=float(doc["capacity"]),
        budget=float(doc["budget"]),
        eta=float(doc["eta"]),
        alpha=float(doc["alpha"]),
        max_visits={str(k): int(v) for k, v in doc["max_visits"].items()},
    )


def load_instance(source: Union[str, Path]) -> Instance:
    """Load an instance from a file path or from raw JSON text."""
    if isinstance(source, Path):
        text = source.read_text()
    else:
        stripped = source.lstrip()
        if stripped.startswith("{"):
            text = source
        elif os.path.exists(source):
            text = Path(source).read_text()
        else:
            raise InstanceError(f"no such instance file: {source}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    return instance_from_dict(doc)


def save_instance(instance: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(instance_to_json(instance))
    return path


# -- random generation ---------------------------------------------------

CAPACITY_CLASSES = ("small", "medium", "large")


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters for the random instance generator.

    ``capacity_class`` is one of ``"small"``, ``"medium"``, ``"large"`` or a
    float ``q`` in (0, 1], meaning the capacity is set to the q-quantile of
    the generated demand vector.  ``p`` is the number of facilities that the
    (uniform) budget affords.
    """

    n: int
    m: int
    p: int
    capacity_class: Union[str, float] = "medium"
    alpha: float = 0.5
    demand_range: tuple[int, int] = (10, 100)
    coordinate_box: float = 1000.0
    seed: int = 0
    dropoff_dropoff_arcs: bool = False

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InstanceError("need n >= 1 pickups and m >= 1 drop-offs")
        if self.m > self.n:
            raise InstanceError("m must not exceed n")
        if not (1 <= self.p <= self.m):
            raise InstanceError("need 1 <= p <= m")
        lo, hi = self.demand_range
        if lo < 1 or hi < lo:
            raise InstanceError("demand_range must be a nonempty positive interval")
        if self.coordinate_box <= 0:
            raise InstanceError("coordinate_box must be positive")
        if not (0.0 <= self.alpha <= 1.0):
            raise InstanceError("alpha out of range")
        cc = self.capacity_class
        if isinstance(cc, str):
            if cc not in CAPACITY_CLASSES:
                raise InstanceError(f"unknown capacity class: {cc!r}")
        elif not (0.0 < float(cc) <= 1.0):
            raise InstanceError("quantile capacity class must lie in (0, 1]")


def _capacity_for(demands: np.ndarray, capacity_class: Union[str, float]) -> float:
    peak = float(demands.max())
    total = float(demands.sum())
    if capacity_class == "small":
        return 0.25 * (peak + total)
    if capacity_class == "medium":
        return 0.5 * (peak + total)
    if capacity_class == "large":
        return total
    return float(np.quantile(demands, float(capacity_class)))


def generate_instance(cfg: GeneratorConfig) -> Instance:
    """Deterministically generate a random instance from ``cfg``.

    Coordinates are uniform in a square box centered at the origin, arc
    traversal costs are the l1 distance between endpoints, demands are
    integers from ``demand_range``, per-unit flow costs are traversal cost
    divided by capacity, every drop-off has unit setup cost and the budget
    affords exactly ``p`` of them.  The arc set is complete except that
    drop-off to drop-off arcs are omitted unless requested.
    """
    rng = np.random.default_rng(cfg.seed)
    half = cfg.coordinate_box / 2.0
    total = cfg.n + cfg.m
    coords = rng.uniform(-half, half, size=(total, 2))
    # coincident points would produce a zero-cost arc; resample until distinct
    while len(np.unique(coords.round(9), axis=0)) < total:
        coords = rng.uniform(-half, half, size=(total, 2))

    lo, hi = cfg.demand_range
    demands = rng.integers(lo, hi + 1, size=cfg.n)
    capacity = _capacity_for(demands, cfg.capacity_class)

    ids = [f"a{i + 1}" for i in range(cfg.n)] + [f"b{j + 1}" for j in range(cfg.m)]
    roles = [PICKUP] * cfg.n + [DROPOFF] * cfg.m
    nodes = tuple(
        Node(id=ids[i], role=roles[i], xy=(float(coords[i, 0]), float(coords[i, 1])))
        for i in range(total)
    )

    arcs = []
    for i in range(total):
        for j in range(total):
            if i == j:
                continue
            if roles[i] == DROPOFF and roles[j] == DROPOFF and not cfg.dropoff_dropoff_arcs:
                continue
            cost = float(abs(coords[i, 0] - coords[j, 0]) + abs(coords[i, 1] - coords[j, 1]))
            arcs.append(Arc(tail=ids[i], head=ids[j], cost=cost,
                            flow_cost=cost / capacity))

    return Instance(
        nodes=nodes,
        demands={ids[i]: float(demands[i]) for i in range(cfg.n)},
        setup_costs={ids[cfg.n + j]: 1.0 for j in range(cfg.m)},
        arcs=tuple(arcs),
        capacity=float(capacity),
        budget=float(cfg.p),
        eta=1.0,
        alpha=float(cfg.alpha),
        max_visits={ids[i]: 1 for i in range(cfg.n)},
    )


def min_required_visits(instance: Instance) -> int:
    """Least uniform per-pickup visit bound for which full collection is possible.

    With capacity ``rho`` and peak demand ``d``, ``k`` visits suffice exactly
    when ``d / rho <= k``, so the answer is ``ceil(d / rho)`` (at least 1).
    """
    if instance.capacity <= 0:
        raise InstanceError("capacity must be positive")
    if not instance.demands:
        return 1
    peak = max(instance.demands.values())
    k = math.ceil(peak / instance.capacity - 1e-9)
    return max(1, k)
