"""Clohessy-Wiltshire relative motion model with impulsive control.

The chaser state is x = (r, v) in the target-centered frame: the first axis
points radially outward, the second along the target velocity, the third
along the orbit normal. Thrust is modeled as instantaneous velocity jumps at
discrete nodes; between nodes the motion is unforced (ballistic) CW drift.

Free final time is handled by dilating time: the solver works on a
normalized clock tau in [0, 1], and each interval carries its own dilation
factor sigma_k = dt/dtau (seconds). All quantities in this module are SI
(m, m/s, s); scaling happens only at subproblem-assembly time.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .discretize import TimeGrid


@dataclass(frozen=True)
class CwParams:
    """Mean motion n (rad/s) of the target's circular orbit."""

    mean_motion: float

    def __post_init__(self):
        if not self.mean_motion > 0.0:
            raise ValueError(f"mean_motion must be > 0, got {self.mean_motion}")


@dataclass(frozen=True)
class State:
    """Relative position r (m) and velocity v (m/s), 3-vectors."""

    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.r.shape != (3,) or self.v.shape != (3,):
            raise ValueError("State r and v must be 3-vectors")
        if not (np.isfinite(self.r).all() and np.isfinite(self.v).all()):
            raise ValueError("State entries must be finite")

    def as_array(self):
        return np.concatenate([self.r, self.v])

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(r=x[:3], v=x[3:6])


@dataclass(frozen=True)
class Impulse:
    """Instantaneous velocity change dv (m/s) delivered at a node."""

    dv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dv", np.asarray(self.dv, dtype=float))
        if self.dv.shape != (3,):
            raise ValueError("Impulse dv must be a 3-vector")
        if not np.isfinite(self.dv).all():
            raise ValueError("Impulse entries must be finite")


@dataclass(frozen=True)
class DilationProfile:
    """Per-interval dilation factors sigma_k (s) on a normalized time grid."""

    sigmas: np.ndarray
    grid: "TimeGrid"

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=float))
        if self.sigmas.ndim != 1 or len(self.sigmas) != len(self.grid.taus) - 1:
            raise ValueError("need one dilation factor per grid interval")
        if not (self.sigmas > 0.0).all():
            raise ValueError("dilation factors must be positive")

    def interval_durations(self):
        """Wall-clock duration of each interval, sigma_k * (tau_{k+1} - tau_k)."""
        return self.sigmas * np.diff(self.grid.taus)


def cw_deriv_vec(params, x):
    """Unforced CW state derivative for a raw 6-vector (integrator form)."""
    n = params.mean_motion
    r, v = x[:3], x[3:6]
    return np.array([
        v[0],
        v[1],
        v[2],
        3.0 * n**2 * r[0] + 2.0 * n * v[1],
        -2.0 * n * v[0],
        -(n**2) * r[2],
    ])


def cw_deriv(params, state):
    """Unforced CW state derivative f(x) as a 6-vector.

    Parameters
    ----------
    params : CwParams
    state : State

    Returns
    -------
    np.ndarray
        (v, a) where a is the CW relative acceleration.
    """
    return cw_deriv_vec(params, state.as_array())


def cw_jacobian(params):
    """Constant Jacobian df/dx of the unforced CW dynamics (6x6)."""
    n = params.mean_motion
    J = np.zeros((6, 6))
    J[0:3, 3:6] = np.eye(3)
    J[3, 0] = 3.0 * n**2
    J[3, 4] = 2.0 * n
    J[4, 3] = -2.0 * n
    J[5, 2] = -(n**2)
    return J


def apply_impulse(state, impulse):
    """Instantaneous velocity jump: position unchanged, velocity += dv."""
    return State(r=state.r, v=state.v + impulse.dv)


def propagate_unforced(params, x0, duration, substeps):
    """Propagate the unforced CW dynamics with fixed-step classical RK4.

    Parameters
    ----------
    params : CwParams
    x0 : np.ndarray
        Initial 6-vector state.
    duration : float
        Propagation time, seconds (>= 0).
    substeps : int
        Number of equal RK4 steps.

    Returns
    -------
    np.ndarray
        State at t0 + duration.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = duration / substeps
    x = np.array(x0, dtype=float)
    for _ in range(substeps):
        k1 = cw_deriv_vec(params, x)
        k2 = cw_deriv_vec(params, x + 0.5 * h * k1)
        k3 = cw_deriv_vec(params, x + 0.5 * h * k2)
        k4 = cw_deriv_vec(params, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def time_of_flight(profile):
    """Total wall-clock maneuver time: sum of sigma_k * (tau_{k+1} - tau_k)."""
    return float(np.sum(profile.interval_durations()))
