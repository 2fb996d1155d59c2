"""Data-driven state feedback for unknown bilinear systems with a certified basin of attraction."""

__version__ = "0.1.0"

from .data import DataDiagnostics, DataRecord, diagnose, run_experiment
from .design import (
    DesignConfig,
    DesignResult,
    SweepTable,
    best_design,
    design_data_based,
    design_model_based,
    sweep_eps1,
)
from .maxdet import Solution, SolverOptions, Status, solve
from .system import BilinearSystem, ClosedLoopData, Ellipsoid, example_system
from .verify import VerificationReport, verify_basin, verify_decrease, verify_design, verify_robust
