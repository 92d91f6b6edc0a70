"""Connectivity-cut separation.

Candidate cut sets come from a Gusfield min-cut tree built over an
undirected support graph of the current LP point.  Phase I works on the
original node set with all replicas of a node merged and yields aggregated
rows; phase II, tried only when phase I comes back empty, works on the
extended node set and yields exact rows with a witness pickup replica on
each side.  Every candidate's directed violation is recomputed exactly
before a row is emitted, so the undirected proxy can only miss cuts, never
produce an invalid one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .extgraph import ExtendedGraph
from .formulation import CandidatePoint
from .instance import Instance

SUPPORT_EPS = 1e-9


@dataclass
class FlowNetwork:
    """Undirected capacitated graph on nodes 0..n-1; parallel edges merge."""

    n: int
    edges: list[tuple[int, int, float]]

    def __post_init__(self):
        merged: dict[tuple[int, int], float] = {}
        for u, v, cap in self.edges:
            if u == v:
                continue
            if cap < 0:
                raise ValueError("negative capacity")
            key = (u, v) if u < v else (v, u)
            merged[key] = merged.get(key, 0.0) + float(cap)
        self.edges = [(u, v, c) for (u, v), c in sorted(merged.items())]

    def capacity_matrix(self) -> np.ndarray:
        cap = np.zeros((self.n, self.n))
        for u, v, c in self.edges:
            cap[u, v] += c
            cap[v, u] += c
        return cap


def max_flow(net: FlowNetwork, source: int, sink: int) -> tuple[float, set[int]]:
    """Max source-sink flow and the source side of one minimum cut.

    Shortest-augmenting-path search on the residual matrix; for an
    undirected edge the residual starts at the capacity in both directions.
    """
    if source == sink:
        raise ValueError("source and sink must differ")
    n = net.n
    res = net.capacity_matrix()
    flow = 0.0
    while True:
        parent = np.full(n, -1, dtype=np.int64)
        parent[source] = source
        queue = deque([source])
        while queue:
            u = queue.popleft()
            if u == sink:
                break
            for v in np.flatnonzero(res[u] > SUPPORT_EPS):
                if parent[v] < 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            break
        push = np.inf
        v = sink
        while v != source:
            u = int(parent[v])
            push = min(push, res[u, v])
            v = u
        v = sink
        while v != source:
            u = int(parent[v])
            res[u, v] -= push
            res[v, u] += push
            v = u
        flow += push
    reachable = {source}
    queue = deque([source])
    seen = np.zeros(n, dtype=bool)
    seen[source] = True
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(res[u] > SUPPORT_EPS):
            if not seen[v]:
                seen[v] = True
                reachable.add(int(v))
                queue.append(int(v))
    return flow, reachable


@dataclass
class MinCutTree:
    """Gomory-Hu tree: path-minimum edge weight equals the pairwise min cut."""

    n: int
    edges: list[tuple[int, int, float]]

    def adjacency(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for u, v, w in self.edges:
            adj[u].append((v, w))
            adj[v].append((u, w))
        return adj

    def pair_min_cut(self, u: int, v: int) -> float:
        """Minimum edge weight on the tree path from u to v."""
        adj = self.adjacency()
        best = np.full(self.n, -1.0)
        best[u] = np.inf
        queue = deque([u])
        while queue:
            a = queue.popleft()
            for b, w in adj[a]:
                if best[b] < 0:
                    best[b] = min(best[a], w)
                    queue.append(b)
        return float(best[v])

    def cut_sides(self) -> list[tuple[float, set[int]]]:
        """For each tree edge, its weight and one side of the induced cut."""
        adj = self.adjacency()
        sides = []
        for u, v, w in self.edges:
            side = {u}
            queue = deque([u])
            while queue:
                a = queue.popleft()
                for b, _ in adj[a]:
                    if (a == u and b == v) or (a == v and b == u):
                        continue  # walk the tree without the removed edge
                    if b not in side:
                        side.add(b)
                        queue.append(b)
            sides.append((w, side))
        return sides


def gomory_hu_tree(net: FlowNetwork) -> MinCutTree:
    """Gusfield's procedure: n-1 max-flow calls, no node contraction."""
    n = net.n
    if n < 2:
        raise ValueError("need at least two nodes")
    parent = np.zeros(n, dtype=np.int64)
    weight = np.zeros(n)
    for i in range(1, n):
        p = int(parent[i])
        cut_value, side = max_flow(net, i, p)
        weight[i] = cut_value
        for j in range(i + 1, n):
            if int(parent[j]) == p and j in side:
                parent[j] = i
        if int(parent[p]) != p and int(parent[p]) in side:
            gp = int(parent[p])
            parent[i] = gp
            parent[p] = i
            weight[i] = weight[p]
            weight[p] = cut_value
    edges = [(i, int(parent[i]), float(weight[i])) for i in range(1, n)]
    return MinCutTree(n=n, edges=edges)


@dataclass
class CutCandidate:
    """One violated connectivity inequality, ready to be turned into a row.

    ``nodes`` holds original node positions for phase I and extended node
    indices for phase II; ``witnesses`` are the two pickup replicas backing
    an exact cut (phase II only).
    """

    phase: int
    nodes: frozenset[int]
    violation: float
    witnesses: Optional[tuple[int, int]] = None

    def describe(self, ext: ExtendedGraph) -> dict:
        """One JSON-ready record per cut: phase, S, nu_or_mu, witnesses."""
        if self.phase == 1:
            ids = sorted(ext.instance.nodes[i].id for i in self.nodes)
        else:
            ids = sorted(ext.describe(i) for i in self.nodes)
        out = {"phase": self.phase, "S": ids, "nu_or_mu": -self.violation,
               "witnesses": None}
        if self.witnesses is not None:
            out["witnesses"] = [ext.describe(self.witnesses[0]),
                                ext.describe(self.witnesses[1])]
        return out


def _tree_cut_sets(tree: MinCutTree) -> list[set[int]]:
    return [side for _, side in tree.cut_sides()]


def _phase1_nu(instance: Instance, ext: ExtendedGraph, point: CandidatePoint,
               side_mask: np.ndarray, s_bar: dict[str, float]) -> float:
    x = point.x
    crossing = side_mask[ext.tail_orig] & ~side_mask[ext.head_orig]
    total = float(x[crossing].sum())
    s_term = 0.0
    for w in instance.dropoffs:
        if not side_mask[instance.node_order[w]]:
            s_term += s_bar[w]
    return total + s_term - 1.0


def separate_phase1(instance: Instance, ext: ExtendedGraph,
                    point: CandidatePoint, threshold: float = 1e-6
                    ) -> list[CutCandidate]:
    """Aggregated cuts over the original node set.

    The support graph merges all replicas of a node; an undirected edge
    gets, per direction, the largest x value over the replicas of that arc,
    the two directions summed.  Each min-cut-tree cut is evaluated exactly
    in both orientations and the more violated one is kept.
    """
    y = point.y
    x = point.x
    n_orig = len(instance.nodes)

    active_orig = np.zeros(n_orig, dtype=bool)
    for v in range(ext.n_nodes):
        if y[v] > SUPPORT_EPS:
            active_orig[ext.orig_pos_of_node[v]] = True
    nodes = np.flatnonzero(active_orig)
    if len(nodes) < 2:
        return []
    local = {int(g): i for i, g in enumerate(nodes)}

    # per-direction support capacity: max over replica arcs of the original arc
    cap_dir: dict[tuple[int, int], float] = {}
    pos = x > SUPPORT_EPS
    for a in np.flatnonzero(pos):
        key = (int(ext.tail_orig[a]), int(ext.head_orig[a]))
        val = float(x[a])
        if val > cap_dir.get(key, 0.0):
            cap_dir[key] = val
    edges = []
    for (t, h), cval in cap_dir.items():
        if t in local and h in local:
            edges.append((local[t], local[h], cval))
    net = FlowNetwork(n=len(nodes), edges=edges)

    s_bar = {w: point.s_of(w) for w in instance.dropoffs}
    pickup_pos = {instance.node_order[v] for v in instance.pickups}

    tree = gomory_hu_tree(net)
    cuts: list[CutCandidate] = []
    seen: set[frozenset[int]] = set()
    for side in _tree_cut_sets(tree):
        side_glob = {int(nodes[i]) for i in side}
        comp_glob = {int(g) for g in nodes} - side_glob
        # evaluate both orientations exactly, keep the more violated one
        best = None
        for S in (side_glob, comp_glob):
            if not (S & pickup_pos) or not (pickup_pos - S):
                continue
            mask = np.zeros(n_orig, dtype=bool)
            mask[list(S)] = True
            nu = _phase1_nu(instance, ext, point, mask, s_bar)
            if nu < -threshold and (best is None or nu < best[0]):
                best = (nu, frozenset(S))
        if best is not None and best[1] not in seen:
            seen.add(best[1])
            cuts.append(CutCandidate(phase=1, nodes=best[1], violation=-best[0]))
    return cuts


def _phase2_mu(ext: ExtendedGraph, point: CandidatePoint, side_mask: np.ndarray,
               s_bar: dict[str, float], v: int, v2: int) -> float:
    x = point.x
    y = point.y
    crossing = side_mask[ext.tail] & ~side_mask[ext.head]
    total = float(x[crossing].sum())
    s_term = 0.0
    for w_id, val in s_bar.items():
        wv = ext.node_index[(w_id, 1)]
        if not side_mask[wv]:
            s_term += val
    return total - float(y[v]) - float(y[v2]) + 1.0 + s_term


def separate_phase2(instance: Instance, ext: ExtendedGraph,
                    point: CandidatePoint, threshold: float = 1e-6
                    ) -> list[CutCandidate]:
    """Exact cuts over the extended node set.

    Witnesses on each side are the replicas with the largest y value (ties
    to the lowest index), which maximizes the violation of the emitted row.
    """
    y = point.y
    x = point.x

    nodes = np.flatnonzero(y > SUPPORT_EPS)
    if len(nodes) < 2:
        return []
    local = {int(g): i for i, g in enumerate(nodes)}
    edges = []
    for a in np.flatnonzero(x > SUPPORT_EPS):
        t, h = int(ext.tail[a]), int(ext.head[a])
        if t in local and h in local:
            edges.append((local[t], local[h], float(x[a])))
    net = FlowNetwork(n=len(nodes), edges=edges)

    s_bar = {w: point.s_of(w) for w in instance.dropoffs}
    is_pickup = ext.is_pickup

    def best_witness(cand: set[int]) -> Optional[int]:
        reps = [v for v in cand if is_pickup[v]]
        if not reps:
            return None
        best = max(reps, key=lambda v: (y[v], -v))
        return int(best)

    tree = gomory_hu_tree(net)
    cuts: list[CutCandidate] = []
    seen: set[frozenset[int]] = set()
    all_glob = {int(g) for g in nodes}
    for side in _tree_cut_sets(tree):
        side_glob = {int(nodes[i]) for i in side}
        comp_glob = all_glob - side_glob
        best = None
        for S in (side_glob, comp_glob):
            Sc = all_glob - S
            v = best_witness(S)
            v2 = best_witness(Sc)
            if v is None or v2 is None:
                continue
            mask = np.zeros(ext.n_nodes, dtype=bool)
            mask[list(S)] = True
            mu = _phase2_mu(ext, point, mask, s_bar, v, v2)
            if mu < -threshold and (best is None or mu < best[0]):
                best = (mu, frozenset(S), (v, v2))
        if best is not None and best[1] not in seen:
            seen.add(best[1])
            cuts.append(CutCandidate(phase=2, nodes=best[1], violation=-best[0],
                                     witnesses=best[2]))
    return cuts


def cut_to_row(cut: CutCandidate, ext: ExtendedGraph, catalog) -> tuple:
    """Materialize a candidate as an engine row (cols, coefs, sense, rhs, name)."""
    instance = ext.instance
    if cut.phase == 1:
        mask = np.zeros(len(instance.nodes), dtype=bool)
        mask[list(cut.nodes)] = True
        crossing = np.flatnonzero(mask[ext.tail_orig] & ~mask[ext.head_orig])
        cols = [catalog.x(int(a)) for a in crossing]
        coefs = [1.0] * len(cols)
        if catalog.has_markers:
            for w in instance.dropoffs:
                if not mask[instance.node_order[w]]:
                    cols.append(catalog.s(w))
                    coefs.append(1.0)
        return (np.array(cols), np.array(coefs), ">=", 1.0,
                f"p1[{len(cut.nodes)}]")
    mask = np.zeros(ext.n_nodes, dtype=bool)
    mask[list(cut.nodes)] = True
    crossing = np.flatnonzero(mask[ext.tail] & ~mask[ext.head])
    v, v2 = cut.witnesses
    cols = [catalog.x(int(a)) for a in crossing] + [catalog.y(v), catalog.y(v2)]
    coefs = [1.0] * len(crossing) + [-1.0, -1.0]
    if catalog.has_markers:
        for w in instance.dropoffs:
            wv = ext.node_index[(w, 1)]
            if not mask[wv]:
                cols.append(catalog.s(w))
                coefs.append(1.0)
    return (np.array(cols), np.array(coefs), ">=", -1.0,
            f"p2[{len(cut.nodes)}]")
