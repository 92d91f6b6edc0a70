"""MILP assembly on the extended graph.

Variables: one usage binary per extended node (y), one usage binary and one
nonnegative flow per extended arc (x, f), a split fraction in [0, 1] per
pickup replica (q, absent in single-visit builds), and per drop-off walk
start/end binaries (s, e, absent in cycle builds).

Every row carries a short tag naming its family; the connectivity family is
deliberately not emitted here, it is generated lazily during the solve.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .extgraph import ExtendedGraph
from .instance import DROPOFF, Instance, InstanceError, ProblemVariant

# Row tags, one per constraint family.
TAG_BUDGET = "(1)"
TAG_CARDINALITY = "(2)"
TAG_LINKING = "(3)"
TAG_SPLIT = "(4)"
TAG_SPLIT_ACTIVE = "(5)"
TAG_VISIT_ONCE = "(5b)"
TAG_DEGREE_OUT = "(6a)"
TAG_DEGREE_IN = "(6b)"
TAG_FLOW_BALANCE = "(7)"
TAG_CAPACITY = "(8a)"
TAG_MIN_INTAKE = "(9)"
TAG_IMBALANCE = "(10)"
TAG_END_LIMIT = "(11a)"
TAG_START_LIMIT = "(11b)"
TAG_END_START_MATCH = "(11c)"
TAG_MARKER_OPEN = "(11d)"
TAG_CYCLE_BALANCE = "(cycle1)"
TAG_SINGLE_DROPOFF_OUT = "(k1)"
TAG_SINGLE_DROPOFF_IN = "(k2)"
TAG_SYMMETRY = "(sym)"

ALL_TAGS = {
    TAG_BUDGET, TAG_CARDINALITY, TAG_LINKING, TAG_SPLIT, TAG_SPLIT_ACTIVE,
    TAG_VISIT_ONCE, TAG_DEGREE_OUT, TAG_DEGREE_IN, TAG_FLOW_BALANCE,
    TAG_CAPACITY, TAG_MIN_INTAKE, TAG_IMBALANCE, TAG_END_LIMIT,
    TAG_START_LIMIT, TAG_END_START_MATCH, TAG_MARKER_OPEN,
    TAG_CYCLE_BALANCE, TAG_SINGLE_DROPOFF_OUT, TAG_SINGLE_DROPOFF_IN,
    TAG_SYMMETRY,
}


@dataclass(frozen=True)
class Row:
    cols: np.ndarray
    coefs: np.ndarray
    sense: str          # "<=", ">=", "=="
    rhs: float
    tag: str
    name: str


class VariableCatalog:
    """Contiguous column layout: y | x | f | q | e | s."""

    def __init__(self, ext: ExtendedGraph, variant: ProblemVariant,
                 single_visit: bool):
        self.ext = ext
        self.single_visit = single_visit
        n_nodes, n_arcs = ext.n_nodes, ext.n_arcs

        self.y_offset = 0
        self.x_offset = n_nodes
        self.f_offset = n_nodes + n_arcs

        if single_visit:
            self.q_nodes: list[int] = []
        else:
            self.q_nodes = [int(v) for v in ext.pickup_nodes]
        self.q_offset = self.f_offset + n_arcs
        self._q_col = {v: self.q_offset + i for i, v in enumerate(self.q_nodes)}

        self.dropoff_ids = list(ext.instance.dropoffs)
        self._dropoff_pos = {w: i for i, w in enumerate(self.dropoff_ids)}
        if variant.is_cycle:
            self.n_markers = 0
        else:
            self.n_markers = len(self.dropoff_ids)
        self.e_offset = self.q_offset + len(self.q_nodes)
        self.s_offset = self.e_offset + self.n_markers
        self.n_cols = self.s_offset + self.n_markers

    def y(self, node: int) -> int:
        return self.y_offset + node

    def x(self, arc: int) -> int:
        return self.x_offset + arc

    def f(self, arc: int) -> int:
        return self.f_offset + arc

    @property
    def n_q(self) -> int:
        return len(self.q_nodes)

    def q(self, node: int) -> int:
        return self._q_col[node]

    def has_q(self, node: int) -> bool:
        return node in self._q_col

    def e(self, dropoff_id: str) -> int:
        return self.e_offset + self._dropoff_pos[dropoff_id]

    def s(self, dropoff_id: str) -> int:
        return self.s_offset + self._dropoff_pos[dropoff_id]

    @property
    def has_markers(self) -> bool:
        return self.n_markers > 0

    def column_name(self, col: int) -> str:
        ext = self.ext
        if col < self.x_offset:
            n = ext.nodes[col]
            return f"y_{n.orig}_{n.replica}"
        if col < self.f_offset:
            a = ext.arcs[col - self.x_offset]
            t, h = ext.nodes[a.tail], ext.nodes[a.head]
            return f"x_{t.orig}_{t.replica}__{h.orig}_{h.replica}"
        if col < self.q_offset:
            a = ext.arcs[col - self.f_offset]
            t, h = ext.nodes[a.tail], ext.nodes[a.head]
            return f"f_{t.orig}_{t.replica}__{h.orig}_{h.replica}"
        if col < self.e_offset:
            n = ext.nodes[self.q_nodes[col - self.q_offset]]
            return f"q_{n.orig}_{n.replica}"
        if col < self.s_offset:
            return f"e_{self.dropoff_ids[col - self.e_offset]}"
        return f"s_{self.dropoff_ids[col - self.s_offset]}"


@dataclass
class ModelSpec:
    """A complete model: objective, rows, bounds, integrality, catalog."""

    objective: np.ndarray
    rows: list[Row]
    lower: np.ndarray
    upper: np.ndarray
    is_integer: np.ndarray
    catalog: VariableCatalog
    ext: ExtendedGraph
    instance: Instance
    variant: ProblemVariant

    @property
    def n_cols(self) -> int:
        return self.catalog.n_cols

    def rows_tagged(self, tag: str) -> list[Row]:
        return [r for r in self.rows if r.tag == tag]


class CandidatePoint:
    """A variable assignment viewed through the catalog."""

    def __init__(self, catalog: VariableCatalog, values: np.ndarray):
        if len(values) != catalog.n_cols:
            raise ValueError("assignment length does not match the catalog")
        self.catalog = catalog
        self.values = np.asarray(values, dtype=float)

    @property
    def y(self) -> np.ndarray:
        c = self.catalog
        return self.values[c.y_offset:c.y_offset + c.ext.n_nodes]

    @property
    def x(self) -> np.ndarray:
        c = self.catalog
        return self.values[c.x_offset:c.x_offset + c.ext.n_arcs]

    @property
    def f(self) -> np.ndarray:
        c = self.catalog
        return self.values[c.f_offset:c.f_offset + c.ext.n_arcs]

    def q_of(self, node: int) -> float:
        c = self.catalog
        if c.has_q(node):
            return float(self.values[c.q(node)])
        return 1.0  # single-visit builds collect everything in one go

    def s_of(self, dropoff_id: str) -> float:
        c = self.catalog
        if not c.has_markers:
            return 0.0
        return float(self.values[c.s(dropoff_id)])

    def e_of(self, dropoff_id: str) -> float:
        c = self.catalog
        if not c.has_markers:
            return 0.0
        return float(self.values[c.e(dropoff_id)])


def _row(cols, coefs, sense, rhs, tag, name) -> Row:
    cols = np.asarray(cols, dtype=np.int64)
    coefs = np.asarray(coefs, dtype=float)
    if cols.size != coefs.size:
        raise ValueError("row columns and coefficients differ in length")
    return Row(cols=cols, coefs=coefs, sense=sense, rhs=float(rhs),
               tag=tag, name=name)


def build_model(instance: Instance, variant: ProblemVariant, ext: ExtendedGraph,
                *, tight_linking_bigm: bool = False,
                zero_dropoff_outflow: bool = True) -> ModelSpec:
    """Assemble the model for ``instance`` under ``variant`` on ``ext``.

    ``tight_linking_bigm`` replaces the uniform big-M in the drop-off
    linking rows by the actual incident-arc count, which strengthens the
    LP relaxation without changing the integer feasible set.
    ``zero_dropoff_outflow`` pins flow on arcs leaving drop-offs to zero
    (the vehicle leaves a facility empty), which makes walk loads
    reconstructable from the flow values; switch it off to keep the fully
    general flow polytope.
    """
    variant.check_against(instance)
    eff = variant.effective_max_visits(instance)
    single_visit = all(m == 1 for m in eff.values())
    cat = VariableCatalog(ext, variant, single_visit)
    n = cat.n_cols

    lower = np.zeros(n)
    upper = np.ones(n)
    is_integer = np.ones(n, dtype=bool)

    # flow columns: continuous, unbounded above unless pinned
    f_lo, f_hi = cat.f_offset, cat.f_offset + ext.n_arcs
    upper[f_lo:f_hi] = np.inf
    is_integer[f_lo:f_hi] = False
    # split columns: continuous in [0, 1]
    q_lo, q_hi = cat.q_offset, cat.q_offset + cat.n_q
    is_integer[q_lo:q_hi] = False

    if single_visit:
        for v in ext.pickup_nodes:
            lower[cat.y(v)] = 1.0  # every pickup is visited exactly once

    if zero_dropoff_outflow:
        for w in ext.dropoff_nodes:
            for a in ext.out_arcs[w]:
                upper[cat.f(a)] = 0.0

    objective = np.zeros(n)
    alpha = instance.alpha
    for a in ext.arcs:
        objective[cat.x(a.index)] = alpha * a.cost
        objective[cat.f(a.index)] = (1.0 - alpha) * a.flow_cost

    rows: list[Row] = []
    dropoffs = instance.dropoffs

    # budget
    if variant.use_cardinality_budget:
        setups = [instance.setup_costs[w] for w in dropoffs]
        p = int(instance.budget // setups[0])
        cols = [cat.y(ext.node_index[(w, 1)]) for w in dropoffs]
        rows.append(_row(cols, np.ones(len(cols)), "<=", p,
                         TAG_CARDINALITY, "budget_cardinality"))
    else:
        cols = [cat.y(ext.node_index[(w, 1)]) for w in dropoffs]
        coefs = [instance.setup_costs[w] for w in dropoffs]
        rows.append(_row(cols, coefs, "<=", instance.budget,
                         TAG_BUDGET, "budget"))

    # drop-off linking: aggregated big-M, or per-direction caps when a single
    # visit to each drop-off is allowed
    n_pickup_ext = int(ext.is_pickup.sum())
    for w in dropoffs:
        wv = ext.node_index[(w, 1)]
        if variant.dropoff_visit_limit == 1:
            out = ext.out_arcs[wv]
            rows.append(_row([cat.x(a) for a in out] + [cat.y(wv)],
                             [1.0] * len(out) + [-1.0], "<=", 0.0,
                             TAG_SINGLE_DROPOFF_OUT, f"single_out[{w}]"))
            inn = ext.in_arcs[wv]
            rows.append(_row([cat.x(a) for a in inn] + [cat.y(wv)],
                             [1.0] * len(inn) + [-1.0], "<=", 0.0,
                             TAG_SINGLE_DROPOFF_IN, f"single_in[{w}]"))
        else:
            inc = ext.incident_arcs(wv)
            big_m = float(len(inc)) if tight_linking_bigm else 2.0 * n_pickup_ext
            rows.append(_row([cat.x(a) for a in inc] + [cat.y(wv)],
                             [1.0] * len(inc) + [-big_m], "<=", 0.0,
                             TAG_LINKING, f"linking[{w}]"))

    # demand splitting across replicas
    if not single_visit:
        for v in instance.pickups:
            reps = ext.replicas_of[v]
            rows.append(_row([cat.q(r) for r in reps], np.ones(len(reps)),
                             "==", 1.0, TAG_SPLIT, f"split[{v}]"))
        for r in ext.pickup_nodes:
            rows.append(_row([cat.q(int(r)), cat.y(int(r))], [1.0, -1.0],
                             "<=", 0.0, TAG_SPLIT_ACTIVE,
                             f"split_active[{ext.describe(int(r))}]"))
        for v in instance.pickups:
            reps = ext.replicas_of[v]
            rows.append(_row([cat.y(r) for r in reps], np.ones(len(reps)),
                             ">=", 1.0, TAG_VISIT_ONCE, f"visit_once[{v}]"))

    # unit degree at active pickup replicas
    for r in ext.pickup_nodes:
        r = int(r)
        out = ext.out_arcs[r]
        rows.append(_row([cat.x(a) for a in out] + [cat.y(r)],
                         [1.0] * len(out) + [-1.0], "==", 0.0,
                         TAG_DEGREE_OUT, f"deg_out[{ext.describe(r)}]"))
        inn = ext.in_arcs[r]
        rows.append(_row([cat.x(a) for a in inn] + [cat.y(r)],
                         [1.0] * len(inn) + [-1.0], "==", 0.0,
                         TAG_DEGREE_IN, f"deg_in[{ext.describe(r)}]"))

    # flow balance at pickup replicas: outflow - inflow = collected amount
    for r in ext.pickup_nodes:
        r = int(r)
        demand = instance.demands[ext.orig_of(r)]
        cols = [cat.f(a) for a in ext.out_arcs[r]] + [cat.f(a) for a in ext.in_arcs[r]]
        coefs = [1.0] * len(ext.out_arcs[r]) + [-1.0] * len(ext.in_arcs[r])
        if single_visit:
            rows.append(_row(cols, coefs, "==", demand,
                             TAG_FLOW_BALANCE, f"flow[{ext.describe(r)}]"))
        else:
            rows.append(_row(cols + [cat.q(r)], coefs + [-demand], "==", 0.0,
                             TAG_FLOW_BALANCE, f"flow[{ext.describe(r)}]"))

    # vehicle capacity couples flow to arc usage
    for a in ext.arcs:
        rows.append(_row([cat.f(a.index), cat.x(a.index)],
                         [1.0, -instance.capacity], "<=", 0.0,
                         TAG_CAPACITY, f"cap[{a.index}]"))

    # minimum intake at open drop-offs
    for w in dropoffs:
        wv = ext.node_index[(w, 1)]
        inn = ext.in_arcs[wv]
        rows.append(_row([cat.f(a) for a in inn] + [cat.y(wv)],
                         [1.0] * len(inn) + [-instance.eta], ">=", 0.0,
                         TAG_MIN_INTAKE, f"intake[{w}]"))

    # route shape at drop-offs
    if variant.is_cycle:
        for w in dropoffs:
            wv = ext.node_index[(w, 1)]
            cols = [cat.x(a) for a in ext.out_arcs[wv]] + [cat.x(a) for a in ext.in_arcs[wv]]
            coefs = [1.0] * len(ext.out_arcs[wv]) + [-1.0] * len(ext.in_arcs[wv])
            rows.append(_row(cols, coefs, "==", 0.0,
                             TAG_CYCLE_BALANCE, f"cycle_balance[{w}]"))
    else:
        for w in dropoffs:
            wv = ext.node_index[(w, 1)]
            cols = ([cat.x(a) for a in ext.out_arcs[wv]]
                    + [cat.x(a) for a in ext.in_arcs[wv]]
                    + [cat.s(w), cat.e(w)])
            coefs = ([1.0] * len(ext.out_arcs[wv])
                     + [-1.0] * len(ext.in_arcs[wv]) + [-1.0, 1.0])
            rows.append(_row(cols, coefs, "==", 0.0,
                             TAG_IMBALANCE, f"imbalance[{w}]"))
        e_cols = [cat.e(w) for w in dropoffs]
        s_cols = [cat.s(w) for w in dropoffs]
        rows.append(_row(e_cols, np.ones(len(e_cols)), "<=", 1.0,
                         TAG_END_LIMIT, "end_limit"))
        rows.append(_row(s_cols, np.ones(len(s_cols)), "<=", 1.0,
                         TAG_START_LIMIT, "start_limit"))
        # redundant given the degree rows, kept for a complete row catalog
        rows.append(_row(e_cols + s_cols,
                         [1.0] * len(e_cols) + [-1.0] * len(s_cols),
                         "==", 0.0, TAG_END_START_MATCH, "end_start_match"))
        for w in dropoffs:
            wv = ext.node_index[(w, 1)]
            rows.append(_row([cat.e(w), cat.s(w), cat.y(wv)],
                             [1.0, 1.0, -1.0], "<=", 0.0,
                             TAG_MARKER_OPEN, f"marker_open[{w}]"))

    # replica ordering: replica i+1 usable only after replica i, splits sorted
    for v in instance.pickups:
        reps = ext.replicas_of[v]
        if len(reps) < 2:
            continue
        rows.append(_row([cat.y(reps[0])], [1.0], "==", 1.0,
                         TAG_SYMMETRY, f"sym_first[{v}]"))
        for i in range(len(reps) - 1):
            rows.append(_row([cat.y(reps[i + 1]), cat.y(reps[i])], [1.0, -1.0],
                             "<=", 0.0, TAG_SYMMETRY, f"sym_y[{v}][{i + 1}]"))
            if not single_visit:
                rows.append(_row([cat.q(reps[i + 1]), cat.q(reps[i])], [1.0, -1.0],
                                 "<=", 0.0, TAG_SYMMETRY, f"sym_q[{v}][{i + 1}]"))

    return ModelSpec(objective=objective, rows=rows, lower=lower, upper=upper,
                     is_integer=is_integer, catalog=cat, ext=ext,
                     instance=instance, variant=variant)


def objective_terms(spec: ModelSpec,
                    assignment: Union[np.ndarray, Mapping[int, float]]
                    ) -> tuple[float, float, float]:
    """Split an assignment into (design cost, flow cost, blended value)."""
    if isinstance(assignment, np.ndarray):
        if len(assignment) != spec.n_cols:
            raise ValueError("assignment length does not match the model")
        values = assignment
    else:
        values = np.zeros(spec.n_cols)
        for col in range(spec.n_cols):
            if col not in assignment:
                raise KeyError(f"missing variable value for column {col}")
            values[col] = assignment[col]
    point = CandidatePoint(spec.catalog, np.asarray(values, dtype=float))
    design = float(np.dot(spec.ext.cost, point.x))
    flow = float(np.dot(spec.ext.flow_cost, point.f))
    alpha = spec.instance.alpha
    return design, flow, alpha * design + (1.0 - alpha) * flow


# -- LP text export ------------------------------------------------------

def _lp_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", text)


def write_lp(spec: ModelSpec) -> str:
    """Render the model in LP text format (minimization)."""
    cat = spec.catalog
    out = io.StringIO()
    out.write("\\ DOBC model export\n")
    out.write("Minimize\n obj:")
    terms = 0
    for col in range(spec.n_cols):
        c = spec.objective[col]
        if c == 0.0:
            continue
        out.write(f" {'+' if c >= 0 else '-'} {abs(c):.12g} {_lp_name(cat.column_name(col))}")
        terms += 1
        if terms % 8 == 0:
            out.write("\n    ")
    if terms == 0:
        out.write(" 0 " + _lp_name(cat.column_name(0)))
    out.write("\nSubject To\n")
    counters: dict[str, int] = {}
    for row in spec.rows:
        base = _lp_name(row.tag.strip("()")) or "row"
        k = counters.get(base, 0)
        counters[base] = k + 1
        out.write(f" c{base}_{k}:")
        for col, coef in zip(row.cols, row.coefs):
            out.write(f" {'+' if coef >= 0 else '-'} {abs(coef):.12g} "
                      f"{_lp_name(cat.column_name(int(col)))}")
        op = {"<=": "<=", ">=": ">=", "==": "="}[row.sense]
        out.write(f" {op} {row.rhs:.12g}\n")
    out.write("Bounds\n")
    for col in range(spec.n_cols):
        lo, hi = spec.lower[col], spec.upper[col]
        name = _lp_name(cat.column_name(col))
        if hi == np.inf:
            out.write(f" {lo:.12g} <= {name}\n")
        else:
            out.write(f" {lo:.12g} <= {name} <= {hi:.12g}\n")
    binaries = [cat.column_name(col) for col in range(spec.n_cols)
                if spec.is_integer[col]]
    if binaries:
        out.write("Binaries\n")
        for i in range(0, len(binaries), 8):
            out.write(" " + " ".join(_lp_name(b) for b in binaries[i:i + 8]) + "\n")
    out.write("End\n")
    return out.getvalue()
