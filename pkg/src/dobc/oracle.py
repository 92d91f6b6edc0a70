"""Ground-truth solvers for tiny instances.

``solve_full_enumeration`` feeds every connectivity row for every node
subset to the engine up front (no lazy separation), so its optimum is a
reference the branch-and-cut must match.  ``solve_exhaustive_11c`` brute
forces the single-visit cycle variant by enumerating facility subsets,
pickup orderings, and facility insertion points.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Optional

import numpy as np

from .extgraph import build_extended
from .formulation import build_model
from .instance import Instance, ProblemVariant
from .milp import SolveOptions
from .solver import DobcResult, solve_dobc


class OracleError(RuntimeError):
    pass


def _enumerated_connectivity_rows(spec) -> list[tuple]:
    """Every subset cut row, reduced by rows that are implied anyway.

    Reductions, all exactness-preserving:
    - within one side, a witness whose first replica is present is dominated
      by that first replica (its usage binary is pinned to one), and among
      replicas of the same pickup the lowest index dominates (replica
      ordering rows force y to be non-increasing in the replica index);
    - a row whose inside witness has no outgoing arc staying inside, or
      whose outside witness has no incoming arc staying outside, is implied
      by the unit-degree rows and is skipped.
    """
    ext = spec.ext
    cat = spec.catalog
    n = ext.n_nodes
    tail = ext.tail
    head = ext.head

    out_bits = [0] * n
    in_bits = [0] * n
    for a in range(ext.n_arcs):
        out_bits[int(tail[a])] |= 1 << int(head[a])
        in_bits[int(head[a])] |= 1 << int(tail[a])

    pickup_nodes = [int(v) for v in ext.pickup_nodes]
    replica_of = {v: ext.nodes[v].replica for v in pickup_nodes}
    orig_of = {v: ext.nodes[v].orig for v in pickup_nodes}

    def witnesses(members: list[int]) -> list[int]:
        firsts = [v for v in members if replica_of[v] == 1]
        if firsts:
            return [min(firsts)]
        best: dict[str, int] = {}
        for v in members:
            o = orig_of[v]
            if o not in best or replica_of[v] < replica_of[best[o]]:
                best[o] = v
        return sorted(best.values())

    markers = cat.has_markers
    dropoff_cols = {}
    for w in ext.instance.dropoffs:
        dropoff_cols[int(ext.node_index[(w, 1)])] = cat.s(w) if markers else None

    tails = tail.astype(np.int64)
    heads = head.astype(np.int64)

    rows: list[tuple] = []
    seen: set = set()
    full = (1 << n) - 1
    for mask in range(1, full):
        inside = [v for v in pickup_nodes if (mask >> v) & 1]
        if not inside:
            continue
        outside = [v for v in pickup_nodes if not (mask >> v) & 1]
        if not outside:
            continue
        w_in = [v for v in witnesses(inside) if out_bits[v] & mask]
        if not w_in:
            continue
        mask_c = full & ~mask
        w_out = [v for v in witnesses(outside) if in_bits[v] & mask_c]
        if not w_out:
            continue

        in_S = ((mask >> tails) & 1).astype(bool)
        in_S_head = ((mask >> heads) & 1).astype(bool)
        crossing = np.flatnonzero(in_S & ~in_S_head)
        x_cols = [cat.x(int(a)) for a in crossing]
        s_cols = [col for wv, col in dropoff_cols.items()
                  if col is not None and not (mask >> wv) & 1]
        for v in w_in:
            for v2 in w_out:
                sig = (frozenset(x_cols), v, v2, frozenset(s_cols))
                if sig in seen:
                    continue
                seen.add(sig)
                cols = x_cols + [cat.y(v), cat.y(v2)] + s_cols
                coefs = ([1.0] * len(x_cols) + [-1.0, -1.0]
                         + [1.0] * len(s_cols))
                rows.append((np.array(cols, dtype=np.int64),
                             np.array(coefs), ">=", -1.0,
                             f"enum[{mask}:{v},{v2}]"))
    return rows


def solve_full_enumeration(instance: Instance,
                           variant: Optional[ProblemVariant] = None,
                           options: Optional[SolveOptions] = None, *,
                           max_nodes: int = 12,
                           **build_kwargs) -> DobcResult:
    """Exact optimum with all connectivity rows stated up front."""
    variant = variant or ProblemVariant()
    ext = build_extended(instance, variant)
    if ext.n_nodes > max_nodes:
        raise OracleError(f"extended graph has {ext.n_nodes} nodes, "
                          f"cap is {max_nodes}")
    spec = build_model(instance, variant, ext, **build_kwargs)
    rows = _enumerated_connectivity_rows(spec)
    opts = options or SolveOptions(gap=1e-9)
    return solve_dobc(instance, variant, opts, extra_rows=rows,
                      use_lazy_cuts=False, **build_kwargs)


@dataclass
class ExhaustiveResult:
    feasible: bool
    objective: Optional[float]
    facilities: tuple[str, ...]
    order: tuple[str, ...]          # full cyclic node sequence, repeated start
    design: float = 0.0
    flow: float = 0.0


def _compositions(total: int, parts: int, min_part: int):
    if parts == 1:
        if total >= min_part:
            yield (total,)
        return
    for first in range(min_part, total - min_part * (parts - 1) + 1):
        for rest in _compositions(total - first, parts - 1, min_part):
            yield (first,) + rest


def solve_exhaustive_11c(instance: Instance,
                         options: Optional[SolveOptions] = None, *,
                         max_pickups: int = 7,
                         max_dropoffs: int = 4) -> ExhaustiveResult:
    """Brute force for the single-visit cycle variant.

    Enumerates affordable facility subsets, cyclic facility orders, pickup
    permutations, and the split of the permutation into per-facility
    segments; checks capacity and minimum intake segment-wise.
    """
    P = list(instance.pickups)
    U = list(instance.dropoffs)
    if len(P) > max_pickups:
        raise OracleError(f"{len(P)} pickups exceed the cap {max_pickups}")
    if len(U) > max_dropoffs:
        raise OracleError(f"{len(U)} drop-offs exceed the cap {max_dropoffs}")

    lookup = instance.arc_lookup
    demands = instance.demands
    rho = instance.capacity
    eta = instance.eta
    alpha = instance.alpha
    min_seg = 1 if eta > 0 else 0

    best: Optional[ExhaustiveResult] = None
    for r in range(1, len(U) + 1):
        for W in combinations(U, r):
            if sum(instance.setup_costs[w] for w in W) > instance.budget + 1e-9:
                continue
            anchor, rest = W[0], W[1:]
            for ring_rest in permutations(rest):
                ring = (anchor,) + ring_rest
                for perm in permutations(P):
                    for sizes in _compositions(len(P), r, min_seg):
                        seq = [ring[0]]
                        pos = 0
                        ok = True
                        design = flow = 0.0
                        for i in range(r):
                            seg = perm[pos:pos + sizes[i]]
                            pos += sizes[i]
                            nxt = ring[(i + 1) % r]
                            load = 0.0
                            prev = ring[i]
                            for b in seg + (nxt,):
                                arc = lookup.get((prev, b))
                                if arc is None:
                                    ok = False
                                    break
                                design += arc.cost
                                flow += arc.flow_cost * load
                                if b != nxt:
                                    load += demands[b]
                                    if load > rho + 1e-9:
                                        ok = False
                                        break
                                seq.append(b)
                                prev = b
                            if not ok:
                                break
                            if load < eta - 1e-9:
                                ok = False
                                break
                        if not ok:
                            continue
                        value = alpha * design + (1.0 - alpha) * flow
                        if best is None or value < best.objective - 1e-12:
                            best = ExhaustiveResult(
                                feasible=True, objective=value,
                                facilities=W, order=tuple(seq),
                                design=design, flow=flow)
    if best is None:
        return ExhaustiveResult(feasible=False, objective=None,
                                facilities=(), order=())
    return best
