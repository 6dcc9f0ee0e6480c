"""Assembly of the scaled convex subproblem in canonical solver form.

One SCP iteration solves

    minimize   sum ||u_k||^2
             + w_tr (sum ||x_k - xbar_k||^2 + sum ||u_k - ubar_k||^2
                     + sum (sigma_k - sigmabar_k)^2)
             + w_vc ||nu_c||_1 + w_vb sum nu_b
    s.t.       x_{k+1} = A_k x_k + B_k u_k + S_k sigma_k + c_k + nu_c_k
               dilation box, delta-v ball, speed ball, linearized keepout
               with buffer nu_b >= 0, fixed boundary states

in scaled variables. The decision vector is

    z = (x_1..x_K, u_1..u_{K-1}, sigma_1..sigma_{K-1},
         nu_c_1..nu_c_{K-1}, Gamma_1..Gamma_{K-1}, nu_b_1..nu_b_K)

where Gamma are the slack variables of the 1-norm epigraph
(-Gamma <= nu_c <= Gamma). Only the dynamics live in the equality
constraints; everything else is a closed-form projection, so the canonical
program is: diagonal quadratic cost, linear cost, a block bidiagonal sparse
equality matrix, and a Cartesian product of small sets.

Scaling: x = P_x xtilde, u = P_u utilde, sigma = P_sigma sigmatilde with
diagonal P_x, P_u and scalar P_sigma chosen so feasible scaled variables
have magnitude about 1. The dynamics transform as Atilde = P_x^-1 A P_x,
Btilde = P_x^-1 B P_u, Stilde = P_x^-1 S P_sigma, ctilde = P_x^-1 c; the
inverse of a diagonal scaling is elementwise, so no factorization is
needed. The slacks nu_c, Gamma live in scaled state units and nu_b in
scaled position units (it buffers the keepout inequality written in scaled
coordinates), which keeps the projection geometry well conditioned.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretize import NU, NX, DiscreteSystem
from .pipg import Ball, Box, ConicProgram, Singleton, TwoHalfspaces, Zero

KEEPOUT_SINGULARITY_TOL = 1e-6


class KeepoutSingularError(ValueError):
    """Reference position coincides with the keepout center."""


@dataclass(frozen=True)
class ScalingFactors:
    """Diagonal change of variables, held fixed across all SCP iterations."""

    p_x: np.ndarray        # 6 positive scalars
    p_u: np.ndarray        # 3 positive scalars
    p_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "p_x", np.asarray(self.p_x, dtype=float))
        object.__setattr__(self, "p_u", np.asarray(self.p_u, dtype=float))
        if self.p_x.shape != (NX,) or self.p_u.shape != (NU,):
            raise ValueError("scaling factor shapes must be (6,) and (3,)")
        if not ((self.p_x > 0).all() and (self.p_u > 0).all() and self.p_sigma > 0):
            raise ValueError("scaling factors must be strictly positive")

    @property
    def p_pos(self):
        return float(self.p_x[0])


@dataclass(frozen=True)
class SubproblemWeights:
    """Trust region, virtual control, and virtual buffer penalty weights."""

    w_tr: float = 0.005
    w_vc: float = 13.0
    w_vb: float = 0.001

    def __post_init__(self):
        if not (self.w_tr > 0 and self.w_vc > 0 and self.w_vb > 0):
            raise ValueError("subproblem weights must be positive")


class VariableLayout:
    """Index bookkeeping for the stacked decision vector z."""

    def __init__(self, K):
        if K < 3:
            raise ValueError("need at least 3 nodes")
        self.K = K
        self.x_offset = 0
        self.u_offset = NX * K
        self.sigma_offset = self.u_offset + NU * (K - 1)
        self.nu_c_offset = self.sigma_offset + (K - 1)
        self.gamma_offset = self.nu_c_offset + NX * (K - 1)
        self.nu_b_offset = self.gamma_offset + NX * (K - 1)
        self.dim = self.nu_b_offset + K
        self.dim_dual = NX * (K - 1)

    def x_slice(self, k):
        """State x_k, k in [1, K]."""
        i = self.x_offset + NX * (k - 1)
        return slice(i, i + NX)

    def r_indices(self, k):
        i = self.x_offset + NX * (k - 1)
        return np.arange(i, i + 3)

    def v_indices(self, k):
        i = self.x_offset + NX * (k - 1) + 3
        return np.arange(i, i + 3)

    def u_slice(self, k):
        """Impulse u_k, k in [1, K-1]."""
        i = self.u_offset + NU * (k - 1)
        return slice(i, i + NU)

    def sigma_index(self, k):
        """Dilation sigma_k, k in [1, K-1]."""
        return self.sigma_offset + (k - 1)

    def nu_c_slice(self, k):
        i = self.nu_c_offset + NX * (k - 1)
        return slice(i, i + NX)

    def gamma_slice(self, k):
        i = self.gamma_offset + NX * (k - 1)
        return slice(i, i + NX)

    def nu_b_index(self, k):
        """Keepout buffer nu_b_k, k in [1, K]."""
        return self.nu_b_offset + (k - 1)

    def unpack(self, z):
        """Split z into (states, impulses, sigmas, nu_c, gamma, nu_b) arrays."""
        K = self.K
        states = z[self.x_offset:self.x_offset + NX * K].reshape(K, NX)
        impulses = z[self.u_offset:self.u_offset + NU * (K - 1)].reshape(K - 1, NU)
        sigmas = z[self.sigma_offset:self.sigma_offset + (K - 1)]
        nu_c = z[self.nu_c_offset:self.nu_c_offset + NX * (K - 1)].reshape(K - 1, NX)
        gamma = z[self.gamma_offset:self.gamma_offset + NX * (K - 1)].reshape(K - 1, NX)
        nu_b = z[self.nu_b_offset:self.nu_b_offset + K]
        return states, impulses, sigmas, nu_c, gamma, nu_b


def compute_scaling(spec):
    """Scaling factors sized so feasible scaled variables are O(1).

    Positions scale by the larger of the initial-position extent and the
    keepout extent; velocities by v_max, impulses by u_max, dilations by
    sigma_max.
    """
    pos = max(np.abs(spec.r_i).max(), np.abs(spec.r_c).max() + spec.rho_c)
    if pos == 0.0:
        pos = 1.0     # degenerate all-at-origin problem
    if spec.v_max <= 0 or spec.u_max <= 0 or spec.sigma_max <= 0:
        raise ValueError("bounds must be positive to build scaling factors")
    p_x = np.array([pos, pos, pos, spec.v_max, spec.v_max, spec.v_max])
    p_u = np.full(NU, spec.u_max)
    return ScalingFactors(p_x=p_x, p_u=p_u, p_sigma=float(spec.sigma_max))


def scale_system(disc, s):
    """Transform discrete dynamics into scaled coordinates."""
    inv_px = 1.0 / s.p_x
    A = disc.A * inv_px[None, :, None] * s.p_x[None, None, :]
    B = disc.B * inv_px[None, :, None] * s.p_u[None, None, :]
    S = disc.S * inv_px[None, :] * s.p_sigma
    c = disc.c * inv_px[None, :]
    return DiscreteSystem(A=A, B=B, S=S, c=c)


def keepout_halfspace(ref_r, spec):
    """Supporting halfspace of the keepout zone at a reference position.

    Linearizing ||r - r_c|| >= rho_c about ref_r and adding the buffer
    nu_b gives, over the stacked point (r, nu_b),

        -g' r - nu_b <= ||ref_r - r_c|| - g' ref_r - rho_c

    with g the unit vector from the keepout center to ref_r. Physical
    units; the caller rescales for the solver.
    """
    ref_r = np.asarray(ref_r, dtype=float)
    d = ref_r - spec.r_c
    dist = np.linalg.norm(d)
    if dist <= KEEPOUT_SINGULARITY_TOL:
        raise KeepoutSingularError(
            "reference position coincides with the keepout center; "
            "cannot linearize the keepout constraint")
    g = d / dist
    normal = np.concatenate([-g, [-1.0]])
    offset = dist - g @ ref_r - spec.rho_c
    return normal, float(offset)


def _keepout_set(ref_r_phys, spec, scaling, r_idx, nu_b_idx):
    """Scaled TwoHalfspaces coupling (r_k, nu_b_k): keepout and nu_b >= 0."""
    normal, offset = keepout_halfspace(ref_r_phys, spec)
    pos = scaling.p_pos
    # r = pos * rtilde and nu_b = pos * nu_b_tilde; dividing through by pos
    # keeps the same set with a unit-magnitude normal.
    n1 = normal
    b1 = offset / pos
    n2 = np.array([0.0, 0.0, 0.0, -1.0])
    idx = np.concatenate([r_idx, [nu_b_idx]])
    return TwoHalfspaces(normal1=n1, offset1=b1, normal2=n2, offset2=0.0,
                         indices=idx)


def assemble(ref_scaled, disc_scaled, spec, weights, layout, scaling):
    """Build the canonical subproblem about a scaled reference.

    Parameters
    ----------
    ref_scaled : ReferenceTrajectory
        Reference in scaled units (states (K,6), impulses (K-1,3),
        dilations (K-1,)).
    disc_scaled : DiscreteSystem
        Scaled discrete dynamics.
    spec : ProblemSpec
    weights : SubproblemWeights
    layout : VariableLayout
    scaling : ScalingFactors

    Returns
    -------
    ConicProgram
    """
    K = layout.K
    if disc_scaled.n_intervals != K - 1:
        raise ValueError("discrete system does not match the layout")
    n = layout.dim
    m = layout.dim_dual

    # quadratic and linear cost
    P = np.zeros(n)
    P[layout.x_offset:layout.u_offset] = 2.0 * weights.w_tr
    P[layout.u_offset:layout.sigma_offset] = 2.0 * (1.0 + weights.w_tr)
    P[layout.sigma_offset:layout.nu_c_offset] = 2.0 * weights.w_tr

    q = np.zeros(n)
    q[layout.x_offset:layout.u_offset] = -2.0 * weights.w_tr * ref_scaled.states.ravel()
    q[layout.u_offset:layout.sigma_offset] = \
        -2.0 * weights.w_tr * ref_scaled.impulses.ravel()
    q[layout.sigma_offset:layout.nu_c_offset] = \
        -2.0 * weights.w_tr * ref_scaled.dilations
    q[layout.gamma_offset:layout.nu_b_offset] = weights.w_vc
    q[layout.nu_b_offset:] = weights.w_vb

    # equality constraints: A_k x_k - x_{k+1} + B_k u_k + S_k sigma_k + nu_c_k = -c_k
    rows, cols, vals = [], [], []

    def put_block(r0, c0, block):
        rr, cc = np.nonzero(block)
        rows.append(rr + r0)
        cols.append(cc + c0)
        vals.append(block[rr, cc])

    for k in range(K - 1):
        r0 = NX * k
        put_block(r0, layout.x_offset + NX * k, disc_scaled.A[k])
        put_block(r0, layout.x_offset + NX * (k + 1), -np.eye(NX))
        put_block(r0, layout.u_offset + NU * k, disc_scaled.B[k])
        put_block(r0, layout.sigma_offset + k, disc_scaled.S[k].reshape(NX, 1))
        put_block(r0, layout.nu_c_offset + NX * k, np.eye(NX))
    H = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, n))
    h = -disc_scaled.c.ravel()

    # projection set list
    pos, vel = scaling.p_pos, float(scaling.p_x[3])
    ctrl = float(scaling.p_u[0])
    sets = []
    sets.append(Singleton(value=spec.r_i / pos, indices=layout.r_indices(1)))
    sets.append(Singleton(value=spec.v_i / vel, indices=layout.v_indices(1)))
    sets.append(Zero(dim=3, indices=layout.r_indices(K)))
    sets.append(Zero(dim=3, indices=layout.v_indices(K)))
    for k in range(2, K):
        sets.append(Ball(center=np.zeros(3), radius=spec.v_max / vel,
                         indices=layout.v_indices(k)))
        ref_r_phys = ref_scaled.states[k - 1, :3] * pos
        sets.append(_keepout_set(ref_r_phys, spec, scaling,
                                 layout.r_indices(k), layout.nu_b_index(k)))
    for k in (1, K):
        sets.append(Box(lower=[0.0], upper=[np.inf],
                        indices=np.array([layout.nu_b_index(k)])))
    for k in range(1, K):
        sets.append(Ball(center=np.zeros(3), radius=spec.u_max / ctrl,
                         indices=np.arange(layout.u_slice(k).start,
                                           layout.u_slice(k).stop)))
        sets.append(Box(lower=[spec.sigma_min / scaling.p_sigma],
                        upper=[spec.sigma_max / scaling.p_sigma],
                        indices=np.array([layout.sigma_index(k)])))
        nu_idx = np.arange(layout.nu_c_slice(k).start, layout.nu_c_slice(k).stop)
        ga_idx = np.arange(layout.gamma_slice(k).start, layout.gamma_slice(k).stop)
        for i in range(NX):
            sets.append(TwoHalfspaces(
                normal1=np.array([1.0, -1.0]), offset1=0.0,
                normal2=np.array([-1.0, -1.0]), offset2=0.0,
                indices=np.array([nu_idx[i], ga_idx[i]])))

    return ConicProgram(quad_diag=P, linear=q, eq_matrix=H, eq_offset=h,
                        sets=sets)
