"""Replica-extended directed graph and cut-set queries.

Each pickup node is replicated once per allowed visit; drop-off nodes are
never replicated.  An original arc (v, w) yields one extended arc per pair
of endpoint replicas, carrying the original arc's costs.  The projection
back onto original node ids and arc indices is kept alongside.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .instance import DROPOFF, Instance, ProblemVariant


@dataclass(frozen=True)
class ExtNode:
    index: int
    orig: str
    replica: int        # 1-based visit slot; always 1 for drop-offs
    is_pickup: bool


@dataclass(frozen=True)
class ExtArc:
    index: int
    tail: int           # extended node index
    head: int
    orig_index: int     # position of the source arc in instance.arcs
    cost: float
    flow_cost: float


class ExtendedGraph:
    """Dense-indexed extended graph with adjacency and projection tables."""

    def __init__(self, instance: Instance, nodes: list[ExtNode], arcs: list[ExtArc]):
        self.instance = instance
        self.nodes = nodes
        self.arcs = arcs
        self.n_nodes = len(nodes)
        self.n_arcs = len(arcs)

        self.node_index = {(n.orig, n.replica): n.index for n in nodes}
        self.replicas_of: dict[str, list[int]] = {}
        for n in nodes:
            self.replicas_of.setdefault(n.orig, []).append(n.index)

        self.is_pickup = np.array([n.is_pickup for n in nodes], dtype=bool)
        self.pickup_nodes = np.flatnonzero(self.is_pickup)
        self.dropoff_nodes = np.flatnonzero(~self.is_pickup)

        self.tail = np.array([a.tail for a in arcs], dtype=np.int64)
        self.head = np.array([a.head for a in arcs], dtype=np.int64)
        self.cost = np.array([a.cost for a in arcs], dtype=float)
        self.flow_cost = np.array([a.flow_cost for a in arcs], dtype=float)

        order = instance.node_order
        self.orig_pos_of_node = np.array([order[n.orig] for n in nodes], dtype=np.int64)
        self.tail_orig = self.orig_pos_of_node[self.tail] if arcs else np.zeros(0, np.int64)
        self.head_orig = self.orig_pos_of_node[self.head] if arcs else np.zeros(0, np.int64)

        self.out_arcs: list[list[int]] = [[] for _ in range(self.n_nodes)]
        self.in_arcs: list[list[int]] = [[] for _ in range(self.n_nodes)]
        self.arc_pair_index: dict[tuple[int, int], int] = {}
        for a in arcs:
            self.out_arcs[a.tail].append(a.index)
            self.in_arcs[a.head].append(a.index)
            self.arc_pair_index[(a.tail, a.head)] = a.index

    def incident_arcs(self, node: int) -> list[int]:
        return self.in_arcs[node] + self.out_arcs[node]

    def orig_of(self, node: int) -> str:
        return self.nodes[node].orig

    def describe(self, node: int) -> str:
        n = self.nodes[node]
        return f"{n.orig}#{n.replica}" if n.is_pickup else n.orig


def build_extended(instance: Instance, variant: ProblemVariant) -> ExtendedGraph:
    """Build the extended graph for ``instance`` under ``variant``.

    Arc filtering (dropping drop-off to drop-off arcs when the variant
    forbids them) happens before replication, so forbidden arcs never get
    replicas.  With every effective visit bound equal to one the result is
    isomorphic to the original graph.
    """
    eff = variant.effective_max_visits(instance)
    roles = instance.roles

    nodes: list[ExtNode] = []
    for n in instance.nodes:
        copies = eff[n.id] if n.role != DROPOFF else 1
        for r in range(1, copies + 1):
            nodes.append(ExtNode(index=len(nodes), orig=n.id, replica=r,
                                 is_pickup=(n.role != DROPOFF)))

    replicas: dict[str, list[int]] = {}
    for n in nodes:
        replicas.setdefault(n.orig, []).append(n.index)

    arcs: list[ExtArc] = []
    for orig_index, a in enumerate(instance.arcs):
        if (variant.forbid_dropoff_to_dropoff_arcs
                and roles[a.tail] == DROPOFF and roles[a.head] == DROPOFF):
            continue
        for t in replicas[a.tail]:
            for h in replicas[a.head]:
                arcs.append(ExtArc(index=len(arcs), tail=t, head=h,
                                   orig_index=orig_index,
                                   cost=a.cost, flow_cost=a.flow_cost))

    return ExtendedGraph(instance, nodes, arcs)


def cut_arcs(graph: ExtendedGraph, S: Iterable[int], direction: str = "out") -> np.ndarray:
    """Arc indices crossing the node set ``S``.

    ``direction`` selects arcs leaving ``S`` (``"out"``), entering it
    (``"in"``), or either (``"both"``).
    """
    mask = np.zeros(graph.n_nodes, dtype=bool)
    idx = np.fromiter(S, dtype=np.int64)
    if idx.size:
        mask[idx] = True
    in_tail = mask[graph.tail]
    in_head = mask[graph.head]
    if direction == "out":
        sel = in_tail & ~in_head
    elif direction == "in":
        sel = ~in_tail & in_head
    elif direction == "both":
        sel = in_tail != in_head
    else:
        raise ValueError(f"direction must be out/in/both, got {direction!r}")
    return np.flatnonzero(sel)
