"""Dynamic operating envelope computation for radial distribution feeders."""

from .engines import ENGINES, run_engine
from .feeder import (
    Feeder,
    FeederError,
    LineSegment,
    SensitivityMatrices,
    TopologyReport,
    feeder_to_document,
    load_feeder,
    packaged_feeder,
    sensitivity_matrices,
    validate_radial,
)
from .lace import p_solo, run_lace
from .lp import SolverError, assemble_lp, run_lp_doe
from .nlp import oracle_bisect, oracle_grid, run_nlp_doe
from .powerflow import (
    BranchFlowState,
    PowerFlowError,
    PreViolatedNetwork,
    SpareCapacity,
    ThermalInfeasible,
    solve_ac,
    solve_linear,
    spare_capacity,
)
from .results import DoeResult
from .synth import BenchReport, FeederSpec, generate_feeder, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "ENGINES",
    "run_engine",
    "Feeder",
    "FeederError",
    "LineSegment",
    "SensitivityMatrices",
    "TopologyReport",
    "feeder_to_document",
    "load_feeder",
    "packaged_feeder",
    "sensitivity_matrices",
    "validate_radial",
    "p_solo",
    "run_lace",
    "SolverError",
    "assemble_lp",
    "run_lp_doe",
    "oracle_bisect",
    "oracle_grid",
    "run_nlp_doe",
    "BranchFlowState",
    "PowerFlowError",
    "PreViolatedNetwork",
    "SpareCapacity",
    "ThermalInfeasible",
    "solve_ac",
    "solve_linear",
    "spare_capacity",
    "DoeResult",
    "BenchReport",
    "FeederSpec",
    "generate_feeder",
    "run_benchmark",
]
