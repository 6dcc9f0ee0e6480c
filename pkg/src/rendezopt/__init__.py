"""Factorization-free trajectory optimization for impulsive rendezvous.

A sequential-convex-programming optimizer for free-final-time spacecraft
rendezvous under Clohessy-Wiltshire dynamics, with every convex subproblem
solved by an extrapolated primal-dual projected-gradient method that needs
only matrix-vector products and closed-form projections.
"""

__version__ = "0.1.0"

from .discretize import (DiscreteSystem, TimeGrid, discretize_all,
                         discretize_interval, extract_B)
from .dynamics import (CwParams, DilationProfile, Impulse, State, apply_impulse,
                       cw_deriv, cw_jacobian, propagate_unforced, time_of_flight)
from .pipg import (Ball, Box, ConicProgram, Halfspace, PipgDivergedError,
                   PrimalDualPoint, Singleton, SolverSettings, TwoHalfspaces,
                   Zero, kkt_residuals, pipg_solve, power_iteration, project,
                   step_sizes)
from .scp import (ProblemSpec, ReferenceTrajectory, ScpConfig,
                  ScpIterationRecord, Solution, extract_solution,
                  initial_guess, scp_solve, trust_region_radius)
from .subproblem import (KeepoutSingularError, ScalingFactors,
                         SubproblemWeights, VariableLayout, assemble,
                         compute_scaling, keepout_halfspace, scale_system)
from .verify import (ConstraintAudit, MonteCarloConfig, MonteCarloReport,
                     ShootingReport, audit_constraints, monte_carlo,
                     single_shoot)

__all__ = [
    "Ball", "Box", "ConicProgram", "ConstraintAudit", "CwParams",
    "DilationProfile", "DiscreteSystem", "Halfspace", "Impulse",
    "KeepoutSingularError", "MonteCarloConfig", "MonteCarloReport",
    "PipgDivergedError", "PrimalDualPoint", "ProblemSpec",
    "ReferenceTrajectory", "ScalingFactors", "ScpConfig",
    "ScpIterationRecord", "ShootingReport", "Singleton", "Solution",
    "SolverSettings", "State", "SubproblemWeights", "TimeGrid",
    "TwoHalfspaces", "VariableLayout", "Zero", "apply_impulse", "assemble",
    "audit_constraints", "compute_scaling", "cw_deriv", "cw_jacobian",
    "discretize_all", "discretize_interval", "extract_B", "extract_solution",
    "initial_guess", "keepout_halfspace", "kkt_residuals", "monte_carlo",
    "pipg_solve", "power_iteration", "project", "propagate_unforced",
    "scale_system", "scp_solve", "single_shoot", "step_sizes",
    "time_of_flight", "trust_region_radius",
]
