"""Sequential convex programming loop for the rendezvous problem.

Each pass linearizes and discretizes the dilated dynamics about the current
reference, assembles the scaled convex subproblem, solves it with PIPG
warmstarted from the previous primal-dual pair, and adopts the solution as
the next reference. Convergence is declared when the scaled trust-region
radius and both virtual-term norms drop below their thresholds; because
each PIPG solve runs a fixed (small) iteration count, individual
subproblem solves are inexact, but the outer loop still converges to a
dynamically feasible trajectory.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .discretize import NU, NX, TimeGrid, discretize_all
from .dynamics import CwParams
from .pipg import PrimalDualPoint, SolverSettings, pipg_solve
from .subproblem import (ScalingFactors, SubproblemWeights, VariableLayout,
                         assemble, compute_scaling, scale_system)

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class ProblemSpec:
    """Rendezvous problem data, SI units. Terminal state is the origin."""

    cw: CwParams
    r_i: np.ndarray
    v_i: np.ndarray
    v_max: float
    u_max: float
    r_c: np.ndarray
    rho_c: float
    sigma_min: float
    sigma_max: float

    def __post_init__(self):
        object.__setattr__(self, "r_i", np.asarray(self.r_i, dtype=float))
        object.__setattr__(self, "v_i", np.asarray(self.v_i, dtype=float))
        object.__setattr__(self, "r_c", np.asarray(self.r_c, dtype=float))
        if self.r_i.shape != (3,) or self.v_i.shape != (3,) or self.r_c.shape != (3,):
            raise ValueError("r_i, v_i, r_c must be 3-vectors")
        if not (self.v_max > 0 and self.u_max > 0 and self.rho_c > 0):
            raise ValueError("v_max, u_max, rho_c must be positive")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if np.linalg.norm(self.r_i - self.r_c) <= self.rho_c:
            raise ValueError("initial position lies inside the keepout zone")


@dataclass(frozen=True)
class ScpConfig:
    """Node count, penalty weights, solver settings, and loop tolerances."""

    K: int = 15
    weights: SubproblemWeights = field(default_factory=SubproblemWeights)
    pipg: SolverSettings = field(default_factory=SolverSettings)
    eps_tr: float = 1e-3
    eps_vc: float = 1e-6
    eps_vb: float = 1e-6
    max_scp_iters: int = 30
    substeps: int = 20

    def __post_init__(self):
        if self.K < 3:
            raise ValueError("need at least 3 nodes")
        if not (self.eps_tr > 0 and self.eps_vc > 0 and self.eps_vb > 0):
            raise ValueError("convergence tolerances must be positive")
        if self.max_scp_iters < 1:
            raise ValueError("max_scp_iters must be >= 1")


@dataclass(frozen=True)
class ReferenceTrajectory:
    """SCP linearization point: node states, impulses, dilation factors."""

    states: np.ndarray       # (K, 6), pre-burn node states
    impulses: np.ndarray     # (K-1, 3)
    dilations: np.ndarray    # (K-1,)

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "impulses", np.asarray(self.impulses, dtype=float))
        object.__setattr__(self, "dilations", np.asarray(self.dilations, dtype=float))
        K = self.states.shape[0]
        if self.states.shape != (K, NX) or self.impulses.shape != (K - 1, NU) \
                or self.dilations.shape != (K - 1,):
            raise ValueError("inconsistent reference trajectory shapes")

    @property
    def K(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class ScpIterationRecord:
    """Per-iteration diagnostics of one SCP pass."""

    iteration: int
    trust_region_radius: float
    trust_region_radius_unscaled: float
    vc_norm1: float
    vb_sum: float
    objective: float
    pipg_eq_residual: float
    wall_time_s: float


def scale_ref(ref, scaling):
    return ReferenceTrajectory(
        states=ref.states / scaling.p_x[None, :],
        impulses=ref.impulses / scaling.p_u[None, :],
        dilations=ref.dilations / scaling.p_sigma,
    )


def unscale_ref(ref, scaling):
    return ReferenceTrajectory(
        states=ref.states * scaling.p_x[None, :],
        impulses=ref.impulses * scaling.p_u[None, :],
        dilations=ref.dilations * scaling.p_sigma,
    )


def initial_guess(spec, config):
    """Straight-line initializer.

    Positions and velocities interpolate linearly from the initial state to
    the origin, impulses start at zero, and every dilation factor starts at
    the midpoint of its bounds. Interpolated nodes falling inside the
    keepout sphere are pushed radially out to rho_c + 1 m so the first
    linearization is well defined.
    """
    K = config.K
    alpha = np.linspace(0.0, 1.0, K)
    states = np.zeros((K, NX))
    states[:, :3] = np.outer(1.0 - alpha, spec.r_i)
    states[:, 3:] = np.outer(1.0 - alpha, spec.v_i)

    for k in range(K):
        d = states[k, :3] - spec.r_c
        dist = np.linalg.norm(d)
        if dist < spec.rho_c:
            if dist < 1e-9:
                # node exactly at the center: push along the initial bearing
                d = spec.r_i - spec.r_c
                dist = np.linalg.norm(d)
            states[k, :3] = spec.r_c + d * ((spec.rho_c + 1.0) / dist)

    return ReferenceTrajectory(
        states=states,
        impulses=np.zeros((K - 1, NU)),
        dilations=np.full(K - 1, 0.5 * (spec.sigma_min + spec.sigma_max)),
    )


def trust_region_radius(new, old, scaling):
    """2-norm of the stacked scaled deviations between two references."""
    dx = (new.states - old.states) / scaling.p_x[None, :]
    du = (new.impulses - old.impulses) / scaling.p_u[None, :]
    ds = (new.dilations - old.dilations) / scaling.p_sigma
    return float(np.sqrt(np.sum(dx**2) + np.sum(du**2) + np.sum(ds**2)))


def _radius_unscaled(new, old):
    dx = new.states - old.states
    du = new.impulses - old.impulses
    ds = new.dilations - old.dilations
    return float(np.sqrt(np.sum(dx**2) + np.sum(du**2) + np.sum(ds**2)))


def scp_solve(spec, config, grid=None):
    """Run the SCP loop to convergence or the iteration cap.

    Parameters
    ----------
    spec : ProblemSpec
    config : ScpConfig
    grid : TimeGrid, optional
        Defaults to a uniform grid with config.K nodes.

    Returns
    -------
    (ReferenceTrajectory, list[ScpIterationRecord], str)
        Final trajectory, per-iteration records, and a status that is
        "converged" or "max_iters".
    """
    if grid is None:
        grid = TimeGrid.uniform(config.K)
    if grid.K != config.K:
        raise ValueError("grid does not match config.K")

    scaling = compute_scaling(spec)
    layout = VariableLayout(config.K)
    ref = initial_guess(spec, config)
    warm = None
    records = []
    status = STATUS_MAX_ITERS

    for it in range(1, config.max_scp_iters + 1):
        t0 = time.perf_counter()
        disc = discretize_all(ref, grid, spec.cw, config.substeps)
        disc_s = scale_system(disc, scaling)
        ref_s = scale_ref(ref, scaling)
        prog = assemble(ref_s, disc_s, spec, config.weights, layout, scaling)
        sol, diag = pipg_solve(prog, config.pipg, warm)
        warm = sol

        states_s, impulses_s, sigmas_s, nu_c, _, nu_b = layout.unpack(sol.primal)
        new_ref = unscale_ref(
            ReferenceTrajectory(states=states_s, impulses=impulses_s,
                                dilations=sigmas_s), scaling)
        radius = trust_region_radius(new_ref, ref, scaling)
        vc_norm1 = float(np.abs(nu_c).sum())
        vb_sum = float(nu_b.sum())
        records.append(ScpIterationRecord(
            iteration=it,
            trust_region_radius=radius,
            trust_region_radius_unscaled=_radius_unscaled(new_ref, ref),
            vc_norm1=vc_norm1,
            vb_sum=vb_sum,
            objective=diag.objective,
            pipg_eq_residual=diag.eq_residual_inf,
            wall_time_s=time.perf_counter() - t0,
        ))
        ref = new_ref
        if radius < config.eps_tr and vc_norm1 < config.eps_vc \
                and vb_sum < config.eps_vb:
            status = STATUS_CONVERGED
            break

    return ref, records, status


@dataclass(frozen=True)
class Solution:
    """Converged trajectory with wall-clock impulse schedule."""

    states: np.ndarray       # (K, 6) pre-burn node states
    impulses: np.ndarray     # (K-1, 3)
    dilations: np.ndarray    # (K-1,)
    node_times: np.ndarray   # (K,) wall-clock node times, node_times[0] = 0
    t_f: float

    @property
    def K(self):
        return self.states.shape[0]

    @property
    def burn_times(self):
        """Burn k fires at node k; the final node has no burn."""
        return self.node_times[:-1]


def extract_solution(ref, grid):
    """Recover wall-clock burn times and time of flight from a reference."""
    durations = ref.dilations * np.diff(grid.taus)
    node_times = np.concatenate([[0.0], np.cumsum(durations)])
    return Solution(
        states=ref.states.copy(),
        impulses=ref.impulses.copy(),
        dilations=ref.dilations.copy(),
        node_times=node_times,
        t_f=float(node_times[-1]),
    )
