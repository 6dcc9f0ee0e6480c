"""Single-shooting verification, constraint audit, and Monte Carlo harness.

Single shooting replays the converged impulse schedule through the original
dynamics: starting from the initial state, apply each burn and propagate
ballistically for the interval's wall-clock duration, then compare against
the optimizer's node states and the target terminal state. Small terminal
errors certify that the discretized solution is dynamically feasible.

The Monte Carlo harness disperses the initial position, re-solves each
sample, and aggregates convergence and shooting-error statistics. Samples
draw from per-sample random substreams keyed on (seed, index), so reports
are identical regardless of evaluation order or worker count.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import propagate_unforced
from .scp import (STATUS_CONVERGED, ProblemSpec, ScpConfig, TimeGrid,
                  extract_solution, scp_solve)


@dataclass(frozen=True)
class ShootingReport:
    """Terminal errors and per-node defects of a single-shooting replay."""

    terminal_position_error: float    # m
    terminal_velocity_error: float    # m/s
    node_defects: np.ndarray          # (K,) state-space defect at each node
    dense_times: np.ndarray           # (M,) wall-clock sample times
    dense_states: np.ndarray          # (M, 6) shooting trajectory samples


def single_shoot(spec, solution, substeps=100, samples_per_interval=20):
    """Propagate the impulse schedule through the nonlinear dynamics.

    Parameters
    ----------
    spec : ProblemSpec
    solution : Solution
        Impulse schedule with wall-clock burn times.
    substeps : int
        RK4 steps per interval (>= 100 keeps integration error well below
        the solver error being measured).
    samples_per_interval : int
        Dense states recorded per interval, including both sides of each
        impulse discontinuity.

    Returns
    -------
    ShootingReport
    """
    K = solution.K
    x = np.concatenate([spec.r_i, spec.v_i])
    defects = np.zeros(K)
    times, states = [], []

    sub_chunk = max(1, substeps // samples_per_interval)
    for k in range(K - 1):
        defects[k] = np.linalg.norm(x - solution.states[k])
        t_k = solution.node_times[k]
        times.append(t_k)
        states.append(x.copy())
        x = x + np.concatenate([np.zeros(3), solution.impulses[k]])
        times.append(t_k)
        states.append(x.copy())

        duration = solution.node_times[k + 1] - t_k
        h = duration / substeps
        done = 0
        while done < substeps:
            step = min(sub_chunk, substeps - done)
            x = propagate_unforced(spec.cw, x, h * step, step)
            done += step
            if done < substeps:
                times.append(t_k + h * done)
                states.append(x.copy())

    defects[K - 1] = np.linalg.norm(x - solution.states[K - 1])
    times.append(solution.node_times[-1])
    states.append(x.copy())

    return ShootingReport(
        terminal_position_error=float(np.linalg.norm(x[:3])),
        terminal_velocity_error=float(np.linalg.norm(x[3:])),
        node_defects=defects,
        dense_times=np.array(times),
        dense_states=np.array(states),
    )


@dataclass(frozen=True)
class ConstraintAudit:
    """Per-node constraint violations plus informational intersample checks.

    Node arrays hold max(0, violation) in physical units. Intersample
    figures are measured on the dense shooting trajectory where no
    constraints were imposed, so positive values there are expected
    behavior, not solver failures.
    """

    dv_violation: np.ndarray          # (K-1,) ||u_k|| - u_max, clipped at 0
    speed_violation: np.ndarray       # (K,)   ||v_k|| - v_max, clipped at 0
    keepout_violation: np.ndarray     # (K,)   rho_c - ||r_k - r_c||, clipped
    sigma_violation: np.ndarray       # (K-1,) distance outside [min, max]
    max_node_violation: float
    intersample_speed_excess: float
    intersample_keepout_intrusion: float


def audit_constraints(spec, solution, shooting=None):
    """Check the returned trajectory against the original constraints."""
    u_norm = np.linalg.norm(solution.impulses, axis=1)
    v_norm = np.linalg.norm(solution.states[:, 3:], axis=1)
    d_keep = np.linalg.norm(solution.states[:, :3] - spec.r_c, axis=1)
    sig = solution.dilations

    dv_violation = np.maximum(u_norm - spec.u_max, 0.0)
    speed_violation = np.maximum(v_norm - spec.v_max, 0.0)
    keepout_violation = np.maximum(spec.rho_c - d_keep, 0.0)
    sigma_violation = np.maximum(
        np.maximum(spec.sigma_min - sig, sig - spec.sigma_max), 0.0)

    inter_speed = 0.0
    inter_keep = 0.0
    if shooting is not None:
        speeds = np.linalg.norm(shooting.dense_states[:, 3:], axis=1)
        dists = np.linalg.norm(shooting.dense_states[:, :3] - spec.r_c, axis=1)
        inter_speed = float(np.maximum(speeds - spec.v_max, 0.0).max())
        inter_keep = float(np.maximum(spec.rho_c - dists, 0.0).max())

    return ConstraintAudit(
        dv_violation=dv_violation,
        speed_violation=speed_violation,
        keepout_violation=keepout_violation,
        sigma_violation=sigma_violation,
        max_node_violation=float(max(dv_violation.max(), speed_violation.max(),
                                     keepout_violation.max(),
                                     sigma_violation.max())),
        intersample_speed_excess=inter_speed,
        intersample_keepout_intrusion=inter_keep,
    )


@dataclass(frozen=True)
class MonteCarloConfig:
    """Dispersion campaign setup: initial position is the only random input."""

    spec: ProblemSpec
    scp: ScpConfig
    n_samples: int = 128
    position_std: float = 25.0
    rng_seed: int = 0
    iteration_cap: int = 30

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.position_std >= 0.0:
            raise ValueError("position_std must be >= 0")


@dataclass(frozen=True)
class MonteCarloSample:
    index: int
    r0: np.ndarray
    status: str
    scp_iters: int
    term_pos_err: float
    term_vel_err: float
    t_f: float
    trajectory: object        # Solution, or None on error
    error: str = ""


@dataclass(frozen=True)
class MonteCarloReport:
    samples: tuple
    n_samples: int
    n_converged: int
    iters_mean: float
    iters_std: float
    term_pos_err_mean: float
    term_pos_err_std: float
    term_vel_err_mean: float


def sample_initial_position(cfg, index):
    """Draw sample `index` from its own substream keyed on (seed, index)."""
    rng = np.random.default_rng([cfg.rng_seed, index])
    return cfg.spec.r_i + cfg.position_std * rng.standard_normal(3)


def _run_sample(cfg, index):
    r0 = sample_initial_position(cfg, index)
    try:
        spec = replace(cfg.spec, r_i=r0)
        config = replace(cfg.scp, max_scp_iters=cfg.iteration_cap)
        ref, records, status = scp_solve(spec, config)
        sol = extract_solution(ref, TimeGrid.uniform(config.K))
        shoot = single_shoot(spec, sol)
        return MonteCarloSample(
            index=index, r0=r0, status=status, scp_iters=len(records),
            term_pos_err=shoot.terminal_position_error,
            term_vel_err=shoot.terminal_velocity_error,
            t_f=sol.t_f, trajectory=sol)
    except Exception as exc:  # record the failure, keep the campaign running
        return MonteCarloSample(
            index=index, r0=r0, status="error", scp_iters=0,
            term_pos_err=np.nan, term_vel_err=np.nan, t_f=np.nan,
            trajectory=None, error=str(exc))


def monte_carlo(cfg, workers=None):
    """Run the dispersion campaign and aggregate statistics.

    Parameters
    ----------
    cfg : MonteCarloConfig
    workers : int, optional
        Process count for parallel evaluation; None runs sequentially.
        The report is identical either way.

    Returns
    -------
    MonteCarloReport
        Aggregates (iteration and shooting-error statistics) are computed
        over converged samples.
    """
    indices = list(range(cfg.n_samples))
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_run_sample, [cfg] * len(indices), indices))
    else:
        samples = [_run_sample(cfg, i) for i in indices]
    samples.sort(key=lambda s: s.index)

    conv = [s for s in samples if s.status == STATUS_CONVERGED]
    iters = np.array([s.scp_iters for s in conv], dtype=float)
    pos_err = np.array([s.term_pos_err for s in conv])
    vel_err = np.array([s.term_vel_err for s in conv])
    return MonteCarloReport(
        samples=tuple(samples),
        n_samples=cfg.n_samples,
        n_converged=len(conv),
        iters_mean=float(iters.mean()) if len(conv) else np.nan,
        iters_std=float(iters.std()) if len(conv) else np.nan,
        term_pos_err_mean=float(pos_err.mean()) if len(conv) else np.nan,
        term_pos_err_std=float(pos_err.std()) if len(conv) else np.nan,
        term_vel_err_mean=float(vel_err.mean()) if len(conv) else np.nan,
    )
