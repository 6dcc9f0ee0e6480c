"""Inverse-free exact discretization of the dilated, linearized dynamics.

Between nodes the motion is ballistic, so each interval is governed by
xdot = sigma_k * f(x) with the impulse folded into the initial condition
x(tau_k) = x_k + (0, u_k). Linearizing about the reference (xbar, sigmabar)
gives

    A(tau) = sigmabar * df/dx          (constant for CW)
    S(tau) = f(xbar(tau))
    c(tau) = -A(tau) xbar(tau)

and the discrete update x_{k+1} = A_k x_k + B_k u_k + S_k sigma_k + c_k,
where A_k, S_k, c_k solve the variational initial value problem

    PsiA' = A(tau) PsiA,          PsiA(tau_k) = I
    PsiS' = A(tau) PsiS + S(tau), PsiS(tau_k) = 0
    Psic' = A(tau) Psic + c(tau), Psic(tau_k) = 0

on [tau_k, tau_{k+1}]. B_k is the last three columns of A_k: the control is
an instantaneous velocity change, so its influence on the next node equals
the velocity-to-state sensitivity of the transition matrix. The reference
xbar(tau) needed inside S and c is co-integrated from the post-burn node
state, so a single fixed-step RK4 pass over a 54-entry augmented state
(xbar 6, PsiA 36, PsiS 6, Psic 6) produces everything at once, with no
matrix inverses anywhere.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import apply_impulse, cw_deriv_vec, cw_jacobian

NX = 6
NU = 3


@dataclass(frozen=True)
class TimeGrid:
    """Dilated-time nodes 0 = tau_1 < ... < tau_K.

    The default grid is unit-spaced (tau_k = k - 1), so each dilation
    factor sigma_k is directly the wall-clock duration of interval k. With
    the published dilation bounds (around 100-300 s) this is the only
    reading that leaves the rendezvous reachable: a grid compressed to
    [0, 1] would cap the time of flight at sigma_max seconds, far too
    short to cover a kilometer-scale approach under the speed limit.
    """

    taus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        if self.taus.ndim != 1 or len(self.taus) < 2:
            raise ValueError("grid needs at least two nodes")
        if self.taus[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not (np.diff(self.taus) > 0.0).all():
            raise ValueError("grid nodes must be strictly increasing")

    @classmethod
    def uniform(cls, K):
        return cls(np.arange(K, dtype=float))

    @property
    def K(self):
        return len(self.taus)


@dataclass(frozen=True)
class DiscreteSystem:
    """Per-interval discrete dynamics x_{k+1} = A x_k + B u_k + S sigma_k + c.

    A: (K-1, 6, 6), B: (K-1, 6, 3), S: (K-1, 6), c: (K-1, 6). By construction
    B_k equals columns 4-6 of A_k.
    """

    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    c: np.ndarray

    @property
    def n_intervals(self):
        return self.A.shape[0]


def _augmented_deriv(J, sigma_bar, y):
    """Time derivative of the stacked (xbar, PsiA, PsiS, Psic) state."""
    x = y[:NX]
    psi_a = y[NX:NX + 36].reshape(NX, NX)
    psi_s = y[NX + 36:NX + 42]
    psi_c = y[NX + 42:NX + 48]
    fx = J @ x                     # f is linear for CW
    a_psi = sigma_bar * J
    out = np.empty(NX + 48)
    out[:NX] = sigma_bar * fx
    out[NX:NX + 36] = (a_psi @ psi_a).ravel()
    out[NX + 36:NX + 42] = a_psi @ psi_s + fx
    out[NX + 42:NX + 48] = a_psi @ psi_c - a_psi @ x
    return out


def discretize_interval(ref_state_at_node, ref_impulse, sigma_bar, tau_span,
                        params, substeps):
    """Discretize one interval of the dilated dynamics.

    Parameters
    ----------
    ref_state_at_node : State
        Reference state at the left node, before the impulse.
    ref_impulse : Impulse
        Reference impulse at the left node; the linearization reference is
        the post-burn state.
    sigma_bar : float
        Reference dilation factor for the interval, seconds.
    tau_span : (float, float)
        Normalized interval (tau_k, tau_{k+1}).
    params : CwParams
    substeps : int
        Number of equal RK4 steps across the interval.

    Returns
    -------
    (A_k, S_k, c_k) : (6x6, 6, 6) arrays
        Transition matrix and dilation/offset sensitivities at tau_{k+1}.
    """
    tau0, tau1 = tau_span
    if not sigma_bar > 0.0:
        raise ValueError(f"sigma_bar must be > 0, got {sigma_bar}")
    if not tau1 > tau0:
        raise ValueError(f"tau_span must be increasing, got {tau_span}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")

    J = cw_jacobian(params)
    x0 = apply_impulse(ref_state_at_node, ref_impulse).as_array()

    y = np.zeros(NX + 48)
    y[:NX] = x0
    y[NX:NX + 36] = np.eye(NX).ravel()

    h = (tau1 - tau0) / substeps
    for _ in range(substeps):
        k1 = _augmented_deriv(J, sigma_bar, y)
        k2 = _augmented_deriv(J, sigma_bar, y + 0.5 * h * k1)
        k3 = _augmented_deriv(J, sigma_bar, y + 0.5 * h * k2)
        k4 = _augmented_deriv(J, sigma_bar, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    A_k = y[NX:NX + 36].reshape(NX, NX).copy()
    S_k = y[NX + 36:NX + 42].copy()
    c_k = y[NX + 42:NX + 48].copy()
    return A_k, S_k, c_k


def extract_B(A_k):
    """Control sensitivity B_k: the velocity columns (4-6) of A_k."""
    A_k = np.asarray(A_k)
    if A_k.shape != (NX, NX):
        raise ValueError(f"A_k must be 6x6, got {A_k.shape}")
    return A_k[:, 3:6].copy()


def discretize_all(ref, grid, params, substeps):
    """Discretize every interval of a reference trajectory.

    Parameters
    ----------
    ref : ReferenceTrajectory
        K node states (pre-burn), K-1 impulses, K-1 dilation factors.
    grid : TimeGrid
    params : CwParams
    substeps : int

    Returns
    -------
    DiscreteSystem
    """
    from .dynamics import Impulse, State  # local to avoid cycles in type use

    K = grid.K
    if ref.states.shape != (K, NX):
        raise ValueError("reference states do not match the grid")
    A = np.empty((K - 1, NX, NX))
    B = np.empty((K - 1, NX, NU))
    S = np.empty((K - 1, NX))
    c = np.empty((K - 1, NX))
    for k in range(K - 1):
        A[k], S[k], c[k] = discretize_interval(
            State.from_array(ref.states[k]),
            Impulse(ref.impulses[k]),
            float(ref.dilations[k]),
            (grid.taus[k], grid.taus[k + 1]),
            params,
            substeps,
        )
        B[k] = extract_B(A[k])
    return DiscreteSystem(A=A, B=B, S=S, c=c)
