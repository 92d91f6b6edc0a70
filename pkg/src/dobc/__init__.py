"""Exact solver toolkit for budget-constrained pickup routing with drop-offs."""

from .instance import (
    DROPOFF,
    PICKUP,
    Arc,
    GeneratorConfig,
    Instance,
    InstanceError,
    InstanceValidationError,
    Node,
    ProblemVariant,
    generate_instance,
    instance_to_json,
    load_instance,
    min_required_visits,
    save_instance,
)
from .extgraph import ExtendedGraph, build_extended, cut_arcs
from .formulation import (
    CandidatePoint,
    ModelSpec,
    VariableCatalog,
    build_model,
    objective_terms,
    write_lp,
)
from .milp import (
    EngineError,
    LinearProgram,
    LPResult,
    MIPResult,
    SearchNode,
    SolveOptions,
    solve_lp,
    solve_mip,
)
from .separation import (
    CutCandidate,
    FlowNetwork,
    MinCutTree,
    gomory_hu_tree,
    max_flow,
    separate_phase1,
    separate_phase2,
)
from .solution import (
    ObjectiveBreakdown,
    Solution,
    Step,
    UsedArc,
    ValidationReport,
    Walk,
    WalkError,
    export,
    extract_walk,
    parse_solution_json,
    solution_from_point,
    validate,
)
from .solver import DobcResult, solve_dobc
from .oracle import (
    ExhaustiveResult,
    OracleError,
    solve_exhaustive_11c,
    solve_full_enumeration,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
