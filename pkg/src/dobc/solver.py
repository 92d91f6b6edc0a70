"""End-to-end solve: build the model, attach lazy connectivity cuts, decode.

Phase I separation runs first on every candidate point; phase II is tried
only when phase I finds nothing.  Cuts are handed to the engine as global
rows.  Feasible outcomes are decoded into a Solution plus ordered Walk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .extgraph import ExtendedGraph, build_extended
from .formulation import CandidatePoint, ModelSpec, build_model
from .instance import Instance, ProblemVariant
from .milp import (
    MIP_INFEASIBLE,
    MIP_OPTIMAL,
    LinearProgram,
    MIPResult,
    SolveOptions,
    solve_mip,
)
from .separation import cut_to_row, separate_phase1, separate_phase2
from .solution import Solution, Walk, extract_walk, solution_from_point


@dataclass
class DobcResult:
    status: str
    objective: Optional[float]
    bound: float
    gap: float
    node_count: int
    cuts_phase1: int
    cuts_phase2: int
    wall_time: float
    solution: Optional[Solution]
    walk: Optional[Walk]
    values: Optional[np.ndarray]
    model: ModelSpec
    preloaded_rows: int = 0
    cut_log: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.objective is not None


def lp_from_model(spec: ModelSpec) -> LinearProgram:
    lp = LinearProgram(spec.objective, spec.lower, spec.upper)
    for row in spec.rows:
        lp.add_row(row.cols, row.coefs, row.sense, row.rhs, row.name)
    return lp


class ConnectivitySeparator:
    """Two-phase lazy cut callback bound to one model."""

    def __init__(self, spec: ModelSpec, threshold: float,
                 record: bool = False):
        self.spec = spec
        self.threshold = threshold
        self.record = record
        self.count_phase1 = 0
        self.count_phase2 = 0
        self.log: list = []

    def __call__(self, values: np.ndarray):
        spec = self.spec
        point = CandidatePoint(spec.catalog, values)
        cuts = separate_phase1(spec.instance, spec.ext, point, self.threshold)
        phase = 1
        if not cuts:
            cuts = separate_phase2(spec.instance, spec.ext, point, self.threshold)
            phase = 2
        if not cuts:
            return []
        rows = []
        for cut in cuts:
            rows.append(cut_to_row(cut, spec.ext, spec.catalog))
            if self.record:
                self.log.append((cut, rows[-1]))
        if phase == 1:
            self.count_phase1 += len(rows)
        else:
            self.count_phase2 += len(rows)
        return rows


def solve_dobc(instance: Instance, variant: Optional[ProblemVariant] = None,
               options: Optional[SolveOptions] = None, *,
               record_cuts: bool = False,
               reference_point: Optional[np.ndarray] = None,
               extra_rows: Optional[list] = None,
               use_lazy_cuts: bool = True,
               **build_kwargs) -> DobcResult:
    """Solve ``instance`` under ``variant`` and decode the incumbent.

    ``extra_rows`` are engine rows appended before the solve (used by the
    enumeration oracle); ``use_lazy_cuts=False`` disables separation, which
    is only sound when the rows already enforce connectivity.
    """
    variant = variant or ProblemVariant()
    opts = options or SolveOptions()
    t0 = time.monotonic()

    ext = build_extended(instance, variant)
    spec = build_model(instance, variant, ext, **build_kwargs)
    lp = lp_from_model(spec)
    preloaded = 0
    if extra_rows:
        for row in extra_rows:
            lp.add_row(*row[:5])
        preloaded = len(extra_rows)

    separator = None
    callback = None
    if use_lazy_cuts:
        separator = ConnectivitySeparator(spec, opts.cut_violation_tol,
                                          record=record_cuts)
        callback = separator

    res: MIPResult = solve_mip(lp, spec.is_integer, opts,
                               lazy_cut_callback=callback,
                               reference_point=reference_point)

    solution = walk = values = None
    if res.x is not None:
        values = res.x
        solution = solution_from_point(spec, values)
        strict = build_kwargs.get("zero_dropoff_outflow", True)
        walk = extract_walk(solution, ext, strict=strict)

    return DobcResult(
        status=res.status,
        objective=res.objective,
        bound=res.bound,
        gap=res.gap,
        node_count=res.node_count,
        cuts_phase1=separator.count_phase1 if separator else 0,
        cuts_phase2=separator.count_phase2 if separator else 0,
        wall_time=time.monotonic() - t0,
        solution=solution,
        walk=walk,
        values=values,
        model=spec,
        preloaded_rows=preloaded,
        cut_log=separator.log if separator else [],
    )
