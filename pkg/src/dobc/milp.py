"""Self-contained mixed-integer linear programming engine.

LPs are solved by a bounded-variable primal simplex over a dense working
matrix: every row gets a slack column whose bounds encode the sense, the
slack basis starts things off, and a composite phase-1 objective drives out
bound violations.  The MIP search is best-bound branch and bound on binary
variables with depth-first plunging until the first incumbent.  A lazy-cut
callback, when given, is invoked on every node's LP point; rows it returns
are added globally and the node is re-solved, and an integral point is only
accepted as incumbent once the callback comes back empty.

Everything here is deterministic: identical inputs give identical pivots,
nodes, and incumbents.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.linalg.blas import dger as _dger
from threadpoolctl import threadpool_limits

LP_OPTIMAL = "optimal"
LP_INFEASIBLE = "infeasible"
LP_UNBOUNDED = "unbounded"

MIP_OPTIMAL = "optimal"
MIP_GAP_REACHED = "gap_reached"
MIP_INFEASIBLE = "infeasible"
MIP_TIME_LIMIT = "time_limit"


class EngineError(RuntimeError):
    """Numerical failure or contract violation inside the engine."""


class _DeadlineReached(Exception):
    pass


class _RestartSolve(Exception):
    """Internal: basis went numerically bad, retry from a cold start."""


@dataclass
class SolveOptions:
    """Engine knobs; defaults mirror the benchmark configuration."""

    gap: float = 0.005
    time_limit: float = 7200.0
    integrality_tol: float = 1e-6
    lp_feasibility_tol: float = 1e-7
    cut_violation_tol: float = 1e-6
    node_selection: str = "best-bound-plunge"
    branching: str = "most-fractional"
    deterministic: bool = True
    cut_rounds_per_node: int = 20
    max_nodes: Optional[int] = None
    debug_check_cuts: bool = False
    collect_node_log: bool = False
    max_simplex_iters: int = 200_000
    bland_after: int = 8_000
    refactor_every: int = 200

    def __post_init__(self):
        if not (0.0 <= self.gap < 1.0):
            raise ValueError("gap must lie in [0, 1)")
        for name in ("time_limit", "integrality_tol", "lp_feasibility_tol",
                     "cut_violation_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.node_selection != "best-bound-plunge":
            raise ValueError(f"unknown node selection rule: {self.node_selection!r}")
        if self.branching != "most-fractional":
            raise ValueError(f"unknown branching rule: {self.branching!r}")


class LinearProgram:
    """Columns with bounds plus a growing sparse row store (minimization)."""

    def __init__(self, objective, lower, upper):
        self.c = np.asarray(objective, dtype=float).copy()
        self.lower = np.asarray(lower, dtype=float).copy()
        self.upper = np.asarray(upper, dtype=float).copy()
        n = len(self.c)
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("objective and bounds disagree on column count")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(np.isneginf(self.lower) & np.isposinf(self.upper)):
            raise ValueError("free columns are not supported; bound at least one side")
        self.n_cols = n
        self.row_cols: list[np.ndarray] = []
        self.row_coefs: list[np.ndarray] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def add_row(self, cols, coefs, sense: str, rhs: float, name: str = "") -> int:
        cols = np.asarray(cols, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float)
        if cols.size != coefs.size:
            raise ValueError("row columns and coefficients disagree")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("row references unknown column")
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        self.row_cols.append(cols)
        self.row_coefs.append(coefs)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.rhs)}")
        return len(self.rhs) - 1


@dataclass
class LPResult:
    status: str
    objective: float
    x: Optional[np.ndarray]
    basis: Optional[tuple]


@dataclass
class SearchNode:
    overrides: dict           # column -> (lower, upper) fixings on this path
    parent_bound: float
    depth: int
    basis: Optional[tuple] = None


@dataclass
class MIPResult:
    status: str
    objective: Optional[float]
    bound: float
    gap: float
    x: Optional[np.ndarray]
    node_count: int
    cut_count: int
    wall_time: float
    node_log: list = field(default_factory=list)
    incumbent_log: list = field(default_factory=list)


def _slack_bounds(sense: str) -> tuple[float, float]:
    if sense == "<=":
        return 0.0, np.inf
    if sense == ">=":
        return -np.inf, 0.0
    return 0.0, 0.0


class _Workspace:
    """Dense simplex working set for one LP; rows may be appended."""

    PIV_TOL = 1e-9
    RC_TOL = 1e-9
    TIE_TOL = 1e-9

    def __init__(self, n_cols: int, objective: np.ndarray):
        self.n = n_cols
        self.c = np.asarray(objective, dtype=float)
        self.A = np.zeros((0, n_cols))
        self.b = np.zeros(0)
        self.slack_lower = np.zeros(0)
        self.slack_upper = np.zeros(0)
        # small LRU of basis inverses keyed by the basis itself; spares the
        # dense refactorization when a warm start revisits a known basis
        self._binv_cache: "dict[bytes, tuple[np.ndarray, int, int]]" = {}
        self._binv_order: list[bytes] = []

    def _cache_put(self, basis: np.ndarray, B_inv: np.ndarray, age: int):
        key = basis.tobytes()
        if key in self._binv_cache:
            self._binv_order.remove(key)
        self._binv_cache[key] = (B_inv.copy(), age, len(basis))
        self._binv_order.append(key)
        while len(self._binv_order) > 8:
            dead = self._binv_order.pop(0)
            del self._binv_cache[dead]

    def _cache_get(self, basis: np.ndarray):
        entry = self._binv_cache.get(basis.tobytes())
        if entry is None or entry[2] != len(basis):
            return None
        return entry

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def append_rows(self, row_cols, row_coefs, senses, rhs):
        k = len(rhs)
        if k == 0:
            return
        block = np.zeros((k, self.n))
        for i in range(k):
            np.add.at(block[i], row_cols[i], row_coefs[i])
        self.A = np.vstack([self.A, block]) if self.m else block
        self.b = np.concatenate([self.b, np.asarray(rhs, dtype=float)])
        lo = np.empty(k)
        hi = np.empty(k)
        for i, s in enumerate(senses):
            lo[i], hi[i] = _slack_bounds(s)
        self.slack_lower = np.concatenate([self.slack_lower, lo])
        self.slack_upper = np.concatenate([self.slack_upper, hi])

    # -- core simplex ------------------------------------------------------

    def solve(self, lower: np.ndarray, upper: np.ndarray,
              warm: Optional[tuple], opts: SolveOptions,
              deadline: Optional[float] = None) -> LPResult:
        for attempt in range(3):
            try:
                return self._solve_attempt(lower, upper,
                                           warm if attempt == 0 else None,
                                           opts, deadline)
            except (np.linalg.LinAlgError, _RestartSolve):
                continue
        raise EngineError("simplex could not maintain a stable basis")

    def _solve_attempt(self, lower: np.ndarray, upper: np.ndarray,
                       warm: Optional[tuple], opts: SolveOptions,
                       deadline: Optional[float] = None) -> LPResult:
        m, n = self.m, self.n
        nt = n + m
        lo = np.concatenate([lower, self.slack_lower])
        hi = np.concatenate([upper, self.slack_upper])
        feas_tol = opts.lp_feasibility_tol
        cost_scale = max(1.0, float(np.max(np.abs(self.c))) if n else 1.0)
        rc_tol = {1: self.RC_TOL, 2: self.RC_TOL * cost_scale}

        age = 0
        cached = None
        if warm is not None:
            old_basis = np.asarray(warm[0])
            if len(old_basis) <= m:
                cached = self._cache_get(old_basis)
        basis, status = self._initial_point(warm, lo, hi)
        B_inv = None
        if cached is not None and np.array_equal(basis[:len(old_basis)], old_basis):
            old_inv, age, m0 = cached
            if age <= 4 * opts.refactor_every:
                B_inv = self._extend_inverse(old_inv, old_basis)
        if B_inv is None:
            age = 0
            try:
                B_inv = self._factorize(basis)
            except np.linalg.LinAlgError:
                basis, status = self._initial_point(None, lo, hi)
                B_inv = self._factorize(basis)
        xB = B_inv @ self._residual(status, lo, hi, basis)

        iters = 0
        pivots_since_refactor = age
        movable = (hi - lo) > 0
        r = np.empty(nt)
        block_t = np.empty(m)
        allow = np.empty(m)
        cB2: Optional[np.ndarray] = None   # phase-2 basic costs, kept in step

        def refactor():
            nonlocal B_inv, xB, pivots_since_refactor
            B_inv = self._factorize(basis)
            xB = B_inv @ self._residual(status, lo, hi, basis)
            pivots_since_refactor = 0

        for phase in (1, 2):
            if phase == 1:
                lbB = lo[basis]
                ubB = hi[basis]
                if (np.max(lbB - xB, initial=0.0) <= feas_tol
                        and np.max(xB - ubB, initial=0.0) <= feas_tol):
                    continue  # already feasible, skip phase 1
            while True:
                iters += 1
                if iters > opts.max_simplex_iters:
                    raise EngineError("simplex cycling guard exhausted")
                if deadline is not None and iters % 128 == 0:
                    if time.monotonic() > deadline:
                        raise _DeadlineReached()
                if pivots_since_refactor >= opts.refactor_every:
                    refactor()

                lbB = lo[basis]
                ubB = hi[basis]
                if phase == 1:
                    below = xB < lbB - feas_tol
                    above = xB > ubB + feas_tol
                    if not below.any() and not above.any():
                        break  # feasible: on to phase 2
                    cB = above.astype(float)
                    cB -= below
                    y = cB @ B_inv
                    np.matmul(y, self.A, out=r[:n])
                    np.negative(r[:n], out=r[:n])
                    np.negative(y, out=r[n:])
                else:
                    below = above = None
                    if cB2 is None:
                        cB2 = np.where(basis < n,
                                       self.c[np.minimum(basis, n - 1)], 0.0)
                    y = cB2 @ B_inv
                    np.matmul(y, self.A, out=r[:n])
                    np.subtract(self.c, r[:n], out=r[:n])
                    np.negative(y, out=r[n:])

                nonbasic = status != 2
                eligible = nonbasic & movable & (
                    ((status == 0) & (r < -rc_tol[phase]))
                    | ((status == 1) & (r > rc_tol[phase])))
                if not eligible.any():
                    if phase == 1:
                        return LPResult(LP_INFEASIBLE, np.inf, None, None)
                    break  # phase 2 optimal

                if iters > opts.bland_after:
                    q = int(np.flatnonzero(eligible)[0])
                else:
                    score = np.where(eligible, np.abs(r), -1.0)
                    q = int(np.argmax(score))

                sgn = 1.0 if status[q] == 0 else -1.0
                a_q = self.A[:, q] if q < n else None
                if a_q is not None:
                    d = B_inv @ a_q
                else:
                    d = B_inv[:, q - n].copy()
                w = sgn * d

                block_t.fill(np.inf)
                tgt = np.zeros(m, dtype=np.int8)
                if phase == 1:
                    feas = ~(below | above)
                else:
                    feas = np.ones(m, dtype=bool)

                sel = feas & (w > self.PIV_TOL) & (lbB > -np.inf)
                block_t[sel] = (xB[sel] - lbB[sel]) / w[sel]
                sel = feas & (w < -self.PIV_TOL) & (ubB < np.inf)
                block_t[sel] = (ubB[sel] - xB[sel]) / (-w[sel])
                tgt[sel] = 1
                if phase == 1:
                    # out-of-bound basics block when they reach the violated bound
                    sel = below & (w < -self.PIV_TOL)
                    block_t[sel] = (lbB[sel] - xB[sel]) / (-w[sel])
                    tgt[sel] = 0
                    sel = above & (w > self.PIV_TOL)
                    block_t[sel] = (xB[sel] - ubB[sel]) / w[sel]
                    tgt[sel] = 1
                np.maximum(block_t, 0.0, out=block_t)

                t_basic = block_t.min() if m else np.inf
                t_flip = hi[q] - lo[q]
                if not np.isfinite(min(t_basic, t_flip)):
                    if phase == 2:
                        return LPResult(LP_UNBOUNDED, -np.inf, None, None)
                    raise EngineError("unbounded phase-1 direction")

                if iters > opts.bland_after:
                    # exact minimum plus lowest-index leaving: no cycling
                    ties = np.flatnonzero(block_t <= t_basic + self.TIE_TOL)
                    rrow = int(ties[np.argmin(basis[ties])]) if len(ties) else -1
                else:
                    # two-pass ratio test: every blocking row may overshoot
                    # its bound by at most the feasibility tolerance, which
                    # frees us to take the largest (most stable) pivot
                    allow.fill(np.inf)
                    absw = np.abs(w)
                    moving = absw > self.PIV_TOL
                    allow[moving] = feas_tol / absw[moving]
                    allow += block_t
                    t_limit = np.min(allow) if m else np.inf
                    cand = np.flatnonzero(block_t <= t_limit)
                    rrow = int(cand[np.argmax(absw[cand])]) if len(cand) else -1
                step = float(block_t[rrow]) if rrow >= 0 else np.inf

                if t_flip <= step + self.TIE_TOL:
                    xB -= t_flip * w
                    status[q] ^= 1
                    pivots_since_refactor += 1
                    continue

                if abs(d[rrow]) < 1e-8:
                    if pivots_since_refactor > 0:
                        refactor()
                        continue
                    raise _RestartSolve()

                xB -= step * w
                leave = basis[rrow]
                status[leave] = tgt[rrow]
                vq = lo[q] + step if sgn > 0 else hi[q] - step
                piv_row = B_inv[rrow] / d[rrow]
                # rank-1 update in place: B_inv -= outer(d, piv_row)
                _dger(-1.0, piv_row, d, a=B_inv.T, overwrite_a=1)
                B_inv[rrow] = piv_row
                basis[rrow] = q
                status[q] = 2
                xB[rrow] = vq
                if cB2 is not None:
                    cB2[rrow] = self.c[q] if q < n else 0.0
                pivots_since_refactor += 1

        # recompute basic values through the current inverse for a clean,
        # in-bounds point; a full refactorization only when drift built up
        if pivots_since_refactor >= opts.refactor_every:
            refactor()
        else:
            xB = B_inv @ self._residual(status, lo, hi, basis)
        self._cache_put(basis, B_inv, pivots_since_refactor)
        x = np.where(status == 1, np.where(np.isfinite(hi), hi, 0.0),
                     np.where(np.isfinite(lo), lo, 0.0))
        x[basis] = xB
        np.clip(x, lo, hi, out=x)
        xs = x[:n]
        obj = float(self.c @ xs)
        return LPResult(LP_OPTIMAL, obj, xs, (basis.copy(), status.copy()))

    # -- helpers -----------------------------------------------------------

    def _initial_point(self, warm, lo, hi):
        m, n = self.m, self.n
        nt = n + m
        if warm is not None:
            old_basis, old_status = warm
            if (len(old_basis) <= m and len(old_status) <= nt
                    and (len(old_status) - len(old_basis)) == n):
                old_m = len(old_basis)
                basis = np.concatenate(
                    [old_basis, np.arange(n + old_m, n + m)]).astype(np.int64)
                status = np.full(nt, 0, dtype=np.int8)
                status[:n + old_m] = old_status[:n + old_m]
                status[n + old_m:] = 2
                self._sanitize_status(basis, status, lo, hi)
                if len(np.unique(basis)) == m:
                    return basis, status
        basis = np.arange(self.n, self.n + m, dtype=np.int64)
        status = np.zeros(nt, dtype=np.int8)
        status[basis] = 2
        self._sanitize_status(basis, status, lo, hi)
        return basis, status

    @staticmethod
    def _sanitize_status(basis, status, lo, hi):
        # a nonbasic column must rest on a finite bound
        nonbasic = status != 2
        at_lo_bad = nonbasic & (status == 0) & np.isneginf(lo)
        status[at_lo_bad] = 1
        at_hi_bad = nonbasic & (status == 1) & np.isposinf(hi)
        status[at_hi_bad] = 0

    def _factorize(self, basis) -> np.ndarray:
        m, n = self.m, self.n
        B = np.zeros((m, m))
        for k, j in enumerate(basis):
            if j < n:
                B[:, k] = self.A[:, j]
            else:
                B[j - n, k] = 1.0
        return np.linalg.inv(B)

    def _extend_inverse(self, old_inv: np.ndarray, old_basis: np.ndarray) -> np.ndarray:
        """Inverse for [old basis columns | new rows' slacks].

        The basis matrix is block lower-triangular: old rows see only the
        old basis, each new row adds its own unit slack column, so the new
        inverse is [[B0inv, 0], [-C @ B0inv, I]] with C the new rows'
        coefficients on the old basis columns.
        """
        m, n = self.m, self.n
        m0 = len(old_basis)
        if m0 == m:
            return old_inv.copy()
        out = np.zeros((m, m))
        out[:m0, :m0] = old_inv
        struct = old_basis < n
        C = np.zeros((m - m0, m0))
        if struct.any():
            C[:, struct] = self.A[m0:, :][:, old_basis[struct]]
        out[m0:, :m0] = -C @ old_inv
        idx = np.arange(m - m0)
        out[m0 + idx, m0 + idx] = 1.0
        return out

    def _residual(self, status, lo, hi, basis):
        vals = np.where(status == 1, np.where(np.isfinite(hi), hi, 0.0),
                        np.where(np.isfinite(lo), lo, 0.0))
        vals[basis] = 0.0
        return self.b - self.A @ vals[:self.n] - vals[self.n:]


def _workspace_from(lp: LinearProgram) -> _Workspace:
    ws = _Workspace(lp.n_cols, lp.c)
    ws.append_rows(lp.row_cols, lp.row_coefs, lp.senses, lp.rhs)
    return ws


def solve_lp(lp: LinearProgram, warm_basis: Optional[tuple] = None,
             options: Optional[SolveOptions] = None) -> LPResult:
    """Solve one LP relaxation; see ``LPResult`` for the outcome."""
    opts = options or SolveOptions()
    ws = _workspace_from(lp)
    # multi-threaded BLAS is pure overhead at these sizes, and one solve is
    # single-threaded by contract
    with threadpool_limits(limits=1, user_api="blas"):
        return ws.solve(lp.lower, lp.upper, warm_basis, opts)


def _row_signature(cols: np.ndarray, coefs: np.ndarray, sense: str, rhs: float):
    order = np.argsort(cols, kind="stable")
    return (sense, round(float(rhs), 9),
            tuple(int(c) for c in cols[order]),
            tuple(round(float(v), 9) for v in coefs[order]))


def _evaluate_row(x: np.ndarray, cols, coefs) -> float:
    return float(np.dot(x[cols], coefs))


def _row_violation(x: np.ndarray, cols, coefs, sense, rhs) -> float:
    lhs = _evaluate_row(x, cols, coefs)
    if sense == "<=":
        return lhs - rhs
    if sense == ">=":
        return rhs - lhs
    return abs(lhs - rhs)


CutCallback = Callable[[np.ndarray], Sequence[tuple]]


def solve_mip(lp: LinearProgram, integer_mask, options: Optional[SolveOptions] = None,
              lazy_cut_callback: Optional[CutCallback] = None,
              reference_point: Optional[np.ndarray] = None) -> MIPResult:
    """Branch and cut over ``lp`` with the masked columns forced integral.

    ``lazy_cut_callback`` maps a candidate point to zero or more violated
    rows ``(cols, coefs, sense, rhs, name)``; returned rows become part of
    the model for the rest of the search.  ``reference_point``, when given
    together with ``options.debug_check_cuts``, is asserted to satisfy every
    generated cut (a soundness tripwire for separation bugs).
    """
    opts = options or SolveOptions()
    mask = np.asarray(integer_mask, dtype=bool)
    if len(mask) != lp.n_cols:
        raise ValueError("integer mask length does not match the LP")
    int_cols = np.flatnonzero(mask)
    with threadpool_limits(limits=1, user_api="blas"):
        return _solve_mip_impl(lp, int_cols, opts, lazy_cut_callback,
                               reference_point)


def _solve_mip_impl(lp: LinearProgram, int_cols: np.ndarray, opts: SolveOptions,
                    lazy_cut_callback: Optional[CutCallback],
                    reference_point: Optional[np.ndarray]) -> MIPResult:

    t0 = time.monotonic()
    deadline = t0 + opts.time_limit
    ws = _workspace_from(lp)
    seen_rows = {_row_signature(c, v, s, r) for c, v, s, r in
                 zip(lp.row_cols, lp.row_coefs, lp.senses, lp.rhs)}

    incumbent: Optional[np.ndarray] = None
    inc_obj = np.inf
    node_count = 0
    cut_count = 0
    node_log: list = []
    incumbent_log: list = []

    # Depth-first with backtracking until the first incumbent, then
    # best-bound pops, each followed by a dive on the nearer child.  The
    # dive keeps finding improved incumbents and keeps consecutive LPs
    # warm-start adjacent; the best-bound pops close the bound.
    seq = 0
    stack: list[SearchNode] = [SearchNode({}, -np.inf, 0, None)]
    heap: list[tuple] = []
    current: Optional[SearchNode] = None

    def push_open(node: SearchNode):
        nonlocal seq
        if incumbent is None:
            stack.append(node)
        else:
            seq += 1
            heapq.heappush(heap, (node.parent_bound, seq, node))

    def drain_stack():
        nonlocal seq
        while stack:
            nd = stack.pop()
            seq += 1
            heapq.heappush(heap, (nd.parent_bound, seq, nd))

    def best_open_bound() -> float:
        bounds = [nd.parent_bound for nd in stack]
        if current is not None:
            bounds.append(current.parent_bound)
        if heap:
            bounds.append(heap[0][0])
        return min(bounds) if bounds else np.inf

    def add_cuts(cuts, candidate) -> int:
        nonlocal cut_count
        cols_l, coefs_l, senses_l, rhs_l = [], [], [], []
        for cut in cuts:
            cols, coefs, sense, rhs = cut[0], cut[1], cut[2], cut[3]
            cols = np.asarray(cols, dtype=np.int64)
            coefs = np.asarray(coefs, dtype=float)
            sig = _row_signature(cols, coefs, sense, rhs)
            if sig in seen_rows:
                continue
            if opts.debug_check_cuts:
                viol = _row_violation(candidate, cols, coefs, sense, rhs)
                if viol <= opts.cut_violation_tol:
                    raise EngineError(
                        f"callback returned a non-violated row (violation {viol:.3g})")
                if reference_point is not None:
                    ref_viol = _row_violation(reference_point, cols, coefs, sense, rhs)
                    if ref_viol > 1e-7:
                        raise EngineError(
                            "callback cut removes the registered feasible point")
            seen_rows.add(sig)
            cols_l.append(cols)
            coefs_l.append(coefs)
            senses_l.append(sense)
            rhs_l.append(rhs)
        ws.append_rows(cols_l, coefs_l, senses_l, rhs_l)
        cut_count += len(rhs_l)
        return len(rhs_l)

    def finish(status: str) -> MIPResult:
        wall = time.monotonic() - t0
        if incumbent is None:
            bound = np.inf if status == MIP_INFEASIBLE else best_open_bound()
            return MIPResult(status, None, bound, np.inf, None, node_count,
                             cut_count, wall, node_log, incumbent_log)
        open_bound = best_open_bound()
        bound = min(inc_obj, open_bound)
        gap = (inc_obj - bound) / max(abs(inc_obj), 1e-9)
        return MIPResult(status, float(inc_obj), float(bound), float(gap),
                         incumbent, node_count, cut_count, wall,
                         node_log, incumbent_log)

    try:
        while current is not None or stack or heap:
            if time.monotonic() > deadline:
                return finish(MIP_TIME_LIMIT)
            if incumbent is not None:
                bound = min(best_open_bound(), inc_obj)
                gap = (inc_obj - bound) / max(abs(inc_obj), 1e-9)
                if gap <= opts.gap:
                    open_left = current is not None or stack or heap
                    return finish(MIP_GAP_REACHED if open_left and gap > 0
                                  else MIP_OPTIMAL)
            if opts.max_nodes is not None and node_count >= opts.max_nodes:
                return finish(MIP_TIME_LIMIT)

            if current is not None:
                node, current = current, None
            elif incumbent is None and stack:
                node = stack.pop()
            elif heap:
                node = heapq.heappop(heap)[2]
            else:
                node = stack.pop()

            prune_eps = 1e-9 * max(1.0, abs(inc_obj))
            if node.parent_bound >= inc_obj - prune_eps:
                continue

            node_count += 1
            lower = lp.lower.copy()
            upper = lp.upper.copy()
            for j, (lo_j, hi_j) in node.overrides.items():
                lower[j] = lo_j
                upper[j] = hi_j

            warm = node.basis
            rounds = 0
            while True:
                res = ws.solve(lower, upper, warm, opts, deadline)
                if res.status == LP_INFEASIBLE:
                    break
                if res.status == LP_UNBOUNDED:
                    raise EngineError("LP relaxation unbounded; MIP is ill-posed")
                obj = res.objective
                if opts.collect_node_log:
                    node_log.append((node.depth, node.parent_bound, obj))
                if obj >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
                    break
                x = res.x
                vals = x[int_cols]
                frac = np.abs(vals - np.round(vals))
                integral = bool((frac <= opts.integrality_tol).all()) if len(vals) else True

                if lazy_cut_callback is not None:
                    if integral or rounds < opts.cut_rounds_per_node:
                        cuts = lazy_cut_callback(x)
                        if cuts:
                            added = add_cuts(cuts, x)
                            if added:
                                if not integral:
                                    rounds += 1
                                warm = res.basis
                                continue

                if integral:
                    incumbent = x.copy()
                    inc_obj = obj
                    incumbent_log.append(obj)
                    drain_stack()
                    break

                j = int(int_cols[np.argmax(frac)])
                val = x[j]
                down = SearchNode({**node.overrides, j: (lower[j], float(np.floor(val)))},
                                  obj, node.depth + 1, res.basis)
                up = SearchNode({**node.overrides, j: (float(np.ceil(val)), upper[j])},
                                obj, node.depth + 1, res.basis)
                near, far = (down, up) if val - np.floor(val) <= 0.5 else (up, down)
                if incumbent is None:
                    push_open(far)
                    push_open(near)   # LIFO: explore the nearer child first
                else:
                    push_open(far)
                    current = near    # dive on the nearer child
                break
    except _DeadlineReached:
        return finish(MIP_TIME_LIMIT)

    if incumbent is None:
        return finish(MIP_INFEASIBLE)
    return finish(MIP_OPTIMAL)
