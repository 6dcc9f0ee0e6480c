"""Extrapolated primal-dual projected-gradient conic solver (PIPG).

Solves problems of the form

    minimize   0.5 z' P z + q' z
    subject to H z = h,  z in D

where P is diagonal PSD and D is a Cartesian product of sets with cheap
closed-form Euclidean projections (balls, boxes, singletons, halfspaces and
intersections of two halfspaces). The iteration uses only matrix-vector
products and projections; there is no factorization anywhere. The dual
variable integrates the equality-constraint violation, and an extrapolation
factor rho in [1.5, 1.9) accelerates both sequences.

Per iteration, with primal step alpha and dual step beta = omega * alpha:

    z+  <- proj_D[xi - alpha (P xi + q + H' eta)]
    w+  <- eta + beta (H (2 z+ - xi) - h)
    xi  <- (1 - rho) xi + rho z+
    eta <- (1 - rho) eta + rho w+

The step sizes need lambda >= max eig P (max of the diagonal here) and an
upper bound on max eig H'H, estimated by power iteration and inflated by a
safety margin.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

_FEAS_TOL = 1e-12


class PipgDivergedError(RuntimeError):
    """Raised when an iterate contains NaN or Inf."""

    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(f"PIPG iterate diverged (NaN/Inf) at iteration {iteration}")


def _as_indices(indices, dim):
    if indices is None:
        return None
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or len(idx) != dim:
        raise ValueError(f"index tag must list exactly {dim} coordinates")
    return idx


@dataclass(frozen=True)
class Ball:
    """Euclidean ball {y : ||y - center|| <= radius}."""

    center: np.ndarray
    radius: float
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0.0:
            raise ValueError(f"ball radius must be > 0, got {self.radius}")
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))

    @property
    def dim(self):
        return len(self.center)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {y : lower <= y <= upper} (infinite bounds allowed)."""

    lower: np.ndarray
    upper: np.ndarray
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have matching shapes")
        if not (self.lower <= self.upper).all():
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))

    @property
    def dim(self):
        return len(self.lower)


@dataclass(frozen=True)
class Singleton:
    """Single fixed point {value}."""

    value: np.ndarray
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))

    @property
    def dim(self):
        return len(self.value)


@dataclass(frozen=True)
class Zero:
    """Degenerate singleton at the origin."""

    dim: int
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("Zero set needs dim >= 1")
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))


@dataclass(frozen=True)
class Halfspace:
    """Halfspace {y : normal' y <= offset}."""

    normal: np.ndarray
    offset: float
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        if not np.any(self.normal):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))

    @property
    def dim(self):
        return len(self.normal)


@dataclass(frozen=True)
class TwoHalfspaces:
    """Intersection {y : n1' y <= b1 and n2' y <= b2}."""

    normal1: np.ndarray
    offset1: float
    normal2: np.ndarray
    offset2: float
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "normal1", np.asarray(self.normal1, dtype=float))
        object.__setattr__(self, "normal2", np.asarray(self.normal2, dtype=float))
        if self.normal1.shape != self.normal2.shape:
            raise ValueError("halfspace normals must have matching shapes")
        if not (np.any(self.normal1) and np.any(self.normal2)):
            raise ValueError("halfspace normals must be nonzero")
        object.__setattr__(self, "indices", _as_indices(self.indices, self.dim))

    @property
    def dim(self):
        return len(self.normal1)


ProjectableSet = (Ball, Box, Singleton, Zero, Halfspace, TwoHalfspaces)


def _project_halfspace(normal, offset, y):
    viol = normal @ y - offset
    if viol <= 0.0:
        return y
    return y - (viol / (normal @ normal)) * normal


def _project_two_halfspaces(s, y):
    """Case analysis for the intersection of two halfspaces.

    Either the point is feasible, or exactly one boundary is active (the
    single-halfspace projection lands feasible for the other), or both are
    active and the answer solves a 2x2 Gram system in the normals.
    """
    v1 = s.normal1 @ y - s.offset1
    v2 = s.normal2 @ y - s.offset2
    if v1 <= _FEAS_TOL and v2 <= _FEAS_TOL:
        return y

    g11 = s.normal1 @ s.normal1
    g22 = s.normal2 @ s.normal2
    p1 = y - (max(v1, 0.0) / g11) * s.normal1
    p2 = y - (max(v2, 0.0) / g22) * s.normal2
    p1_ok = s.normal2 @ p1 - s.offset2 <= _FEAS_TOL
    p2_ok = s.normal1 @ p2 - s.offset1 <= _FEAS_TOL
    if p1_ok and p2_ok:
        return p1 if np.dot(y - p1, y - p1) <= np.dot(y - p2, y - p2) else p2
    if p1_ok:
        return p1
    if p2_ok:
        return p2

    # Both boundaries active: project onto the intersection of the two
    # hyperplanes. Parallel normals make the Gram matrix singular; that
    # cannot happen for the sets this problem family builds, but fall back
    # to sequential halfspace projection rather than dividing by ~0.
    g12 = s.normal1 @ s.normal2
    det = g11 * g22 - g12 * g12
    if det <= 1e-14 * g11 * g22:
        p = _project_halfspace(s.normal1, s.offset1, y) if v1 >= v2 else \
            _project_halfspace(s.normal2, s.offset2, y)
        return _project_halfspace(s.normal2, s.offset2, p) if v1 >= v2 else \
            _project_halfspace(s.normal1, s.offset1, p)
    mu1 = (g22 * v1 - g12 * v2) / det
    mu2 = (g11 * v2 - g12 * v1) / det
    return y - mu1 * s.normal1 - mu2 * s.normal2


def project(set_, y):
    """Euclidean projection of y onto a projectable set.

    Parameters
    ----------
    set_ : one of Ball, Box, Singleton, Zero, Halfspace, TwoHalfspaces
    y : np.ndarray
        Point with length equal to the set dimension.

    Returns
    -------
    np.ndarray
        The unique nearest point of the set.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (set_.dim,):
        raise ValueError(f"point has shape {y.shape}, set has dim {set_.dim}")

    if isinstance(set_, Ball):
        d = y - set_.center
        dist = np.linalg.norm(d)
        if dist <= set_.radius:
            return y.copy()
        return set_.center + (set_.radius / dist) * d
    if isinstance(set_, Box):
        return np.clip(y, set_.lower, set_.upper)
    if isinstance(set_, Singleton):
        return set_.value.copy()
    if isinstance(set_, Zero):
        return np.zeros(set_.dim)
    if isinstance(set_, Halfspace):
        return _project_halfspace(set_.normal, set_.offset, y).copy()
    if isinstance(set_, TwoHalfspaces):
        return _project_two_halfspaces(set_, y).copy()
    raise TypeError(f"not a projectable set: {type(set_).__name__}")


class ProductProjection:
    """Vectorized projection onto a Cartesian product of tagged sets.

    Groups same-shaped sets so the per-iteration work is a handful of
    batched array operations instead of a Python loop over every block.
    Coordinates covered by no set are left unchanged. Results are identical
    to applying ``project`` set by set (the grouping is exact, not an
    approximation).
    """

    def __init__(self, sets, dim):
        cover = np.zeros(dim, dtype=bool)
        for s in sets:
            if s.indices is None:
                raise ValueError("sets in a product must carry index tags")
            if s.indices.min() < 0 or s.indices.max() >= dim:
                raise ValueError("set index tag out of range")
            if cover[s.indices].any():
                raise ValueError("set index tags overlap")
            cover[s.indices] = True

        fixed_idx, fixed_val = [], []
        box_idx, box_lo, box_hi = [], [], []
        balls = {}
        halfspaces = {}
        two_halfspaces = {}
        for s in sets:
            if isinstance(s, Singleton):
                fixed_idx.append(s.indices)
                fixed_val.append(s.value)
            elif isinstance(s, Zero):
                fixed_idx.append(s.indices)
                fixed_val.append(np.zeros(s.dim))
            elif isinstance(s, Box):
                box_idx.append(s.indices)
                box_lo.append(s.lower)
                box_hi.append(s.upper)
            elif isinstance(s, Ball):
                balls.setdefault(s.dim, []).append(s)
            elif isinstance(s, Halfspace):
                halfspaces.setdefault(s.dim, []).append(s)
            elif isinstance(s, TwoHalfspaces):
                two_halfspaces.setdefault(s.dim, []).append(s)
            else:
                raise TypeError(f"not a projectable set: {type(s).__name__}")

        self._fixed_idx = np.concatenate(fixed_idx) if fixed_idx else None
        self._fixed_val = np.concatenate(fixed_val) if fixed_val else None
        self._box_idx = np.concatenate(box_idx) if box_idx else None
        self._box_lo = np.concatenate(box_lo) if box_lo else None
        self._box_hi = np.concatenate(box_hi) if box_hi else None
        self._ball_groups = [
            (np.vstack([s.indices for s in group]),
             np.vstack([s.center for s in group]),
             np.array([s.radius for s in group]))
            for group in balls.values()
        ]
        self._hs_groups = [
            (np.vstack([s.indices for s in group]),
             np.vstack([s.normal for s in group]),
             np.array([s.offset for s in group]))
            for group in halfspaces.values()
        ]
        self._ths_groups = []
        for group in two_halfspaces.values():
            idx = np.vstack([s.indices for s in group])
            n1 = np.vstack([s.normal1 for s in group])
            n2 = np.vstack([s.normal2 for s in group])
            b1 = np.array([s.offset1 for s in group])
            b2 = np.array([s.offset2 for s in group])
            g11 = np.einsum("ij,ij->i", n1, n1)
            g12 = np.einsum("ij,ij->i", n1, n2)
            g22 = np.einsum("ij,ij->i", n2, n2)
            det = g11 * g22 - g12 * g12
            self._ths_groups.append((idx, n1, b1, n2, b2, g11, g12, g22, det))

    def __call__(self, z):
        """Project z in place and return it."""
        if self._fixed_idx is not None:
            z[self._fixed_idx] = self._fixed_val
        if self._box_idx is not None:
            z[self._box_idx] = np.clip(z[self._box_idx], self._box_lo, self._box_hi)
        for idx, centers, radii in self._ball_groups:
            Y = z[idx]
            D = Y - centers
            dist = np.sqrt(np.einsum("ij,ij->i", D, D))
            scale = np.where(dist > radii, radii / np.maximum(dist, 1e-300), 1.0)
            z[idx] = centers + D * scale[:, None]
        for idx, normals, offsets in self._hs_groups:
            Y = z[idx]
            viol = np.einsum("ij,ij->i", normals, Y) - offsets
            step = np.maximum(viol, 0.0) / np.einsum("ij,ij->i", normals, normals)
            z[idx] = Y - step[:, None] * normals
        for idx, n1, b1, n2, b2, g11, g12, g22, det in self._ths_groups:
            Y = z[idx]
            v1 = np.einsum("ij,ij->i", n1, Y) - b1
            v2 = np.einsum("ij,ij->i", n2, Y) - b2
            p1 = Y - (np.maximum(v1, 0.0) / g11)[:, None] * n1
            p2 = Y - (np.maximum(v2, 0.0) / g22)[:, None] * n2
            p1_ok = np.einsum("ij,ij->i", n2, p1) - b2 <= _FEAS_TOL
            p2_ok = np.einsum("ij,ij->i", n1, p2) - b1 <= _FEAS_TOL
            mu1 = (g22 * v1 - g12 * v2) / det
            mu2 = (g11 * v2 - g12 * v1) / det
            p12 = Y - mu1[:, None] * n1 - mu2[:, None] * n2

            d1 = np.einsum("ij,ij->i", Y - p1, Y - p1)
            d2 = np.einsum("ij,ij->i", Y - p2, Y - p2)
            out = np.where((p1_ok & (~p2_ok | (d1 <= d2)))[:, None], p1,
                           np.where(p2_ok[:, None], p2, p12))
            feas = (v1 <= _FEAS_TOL) & (v2 <= _FEAS_TOL)
            out[feas] = Y[feas]
            z[idx] = out
        return z


@dataclass(frozen=True)
class ConicProgram:
    """Canonical problem data: diagonal P, q, sparse H, h, and the set list."""

    quad_diag: np.ndarray
    linear: np.ndarray
    eq_matrix: sp.spmatrix
    eq_offset: np.ndarray
    sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "quad_diag", np.asarray(self.quad_diag, dtype=float))
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float))
        object.__setattr__(self, "eq_offset", np.asarray(self.eq_offset, dtype=float))
        object.__setattr__(self, "eq_matrix", sp.csr_matrix(self.eq_matrix))
        object.__setattr__(self, "sets", tuple(self.sets))
        if (self.quad_diag < 0.0).any():
            raise ValueError("quad_diag must be elementwise nonnegative")
        n = len(self.quad_diag)
        if len(self.linear) != n:
            raise ValueError("linear term length mismatch")
        m = self.eq_matrix.shape[0]
        if self.eq_matrix.shape[1] != n or len(self.eq_offset) != m:
            raise ValueError("equality constraint dimensions are inconsistent")

    @property
    def dim_primal(self):
        return len(self.quad_diag)

    @property
    def dim_dual(self):
        return len(self.eq_offset)

    def objective(self, z):
        return float(0.5 * z @ (self.quad_diag * z) + self.linear @ z)


@dataclass(frozen=True)
class SolverSettings:
    """PIPG hyperparameters.

    rho is the extrapolation factor, omega the dual-to-primal step ratio,
    k_max the fixed iteration count (there is no stopping criterion: the
    solver always runs exactly k_max iterations). The spectral margin
    inflates the power-iteration estimate of max eig H'H so the step-size
    condition holds despite estimation error.
    """

    rho: float = 1.65
    omega: float = 375.0
    k_max: int = 100
    power_iter_tol: float = 1e-6
    power_iter_max: int = 200
    spectral_margin: float = 1.1

    def __post_init__(self):
        if not 1.0 <= self.rho < 2.0:
            raise ValueError(f"rho must be in [1, 2), got {self.rho}")
        if not self.omega > 0.0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.spectral_margin < 1.0:
            raise ValueError("spectral_margin must be >= 1")


@dataclass(frozen=True)
class PrimalDualPoint:
    """A primal-dual pair (z, w)."""

    primal: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "primal", np.asarray(self.primal, dtype=float))
        object.__setattr__(self, "dual", np.asarray(self.dual, dtype=float))

    @classmethod
    def zeros(cls, prog):
        return cls(np.zeros(prog.dim_primal), np.zeros(prog.dim_dual))


@dataclass(frozen=True)
class SolveDiagnostics:
    eq_residual_inf: float
    objective: float
    alpha: float
    beta: float
    sigma_spectral: float
    power_iter_converged: bool
    iterations: int


def power_iteration(H, tol=1e-6, max_iter=200):
    """Estimate the largest eigenvalue of H'H by power iteration.

    Starts from the normalized all-ones vector so runs are reproducible.
    Returns (estimate, converged); on non-convergence the current estimate
    comes back with converged=False and a warning.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    H = sp.csr_matrix(H) if not sp.issparse(H) else H
    n = H.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam_prev = 0.0
    for _ in range(max_iter):
        w = H.T @ (H @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            # ones vector is in the null space; nudge deterministically
            v = np.zeros(n)
            v[0] = 1.0
            lam_prev = 0.0
            continue
        v = w / lam
        if abs(lam - lam_prev) <= tol * max(lam, 1.0):
            return lam, True
        lam_prev = lam
    warnings.warn(f"power iteration did not converge within {max_iter} iterations")
    return lam_prev, False


def step_sizes(lambda_P, sigma_H, omega):
    """Primal and dual step sizes from the spectral bounds.

    alpha = 2 / (lambda + sqrt(lambda^2 + 4 omega sigma)), beta = omega*alpha.
    """
    if lambda_P < 0.0:
        raise ValueError(f"lambda_P must be >= 0, got {lambda_P}")
    if not sigma_H > 0.0:
        raise ValueError(f"sigma_H must be > 0, got {sigma_H}")
    if not omega > 0.0:
        raise ValueError(f"omega must be > 0, got {omega}")
    alpha = 2.0 / (lambda_P + np.sqrt(lambda_P**2 + 4.0 * omega * sigma_H))
    return float(alpha), float(omega * alpha)


def pipg_solve(prog, settings, warmstart=None):
    """Run PIPG for exactly settings.k_max iterations.

    Parameters
    ----------
    prog : ConicProgram
    settings : SolverSettings
    warmstart : PrimalDualPoint, optional
        Initial primal-dual guess; zeros when omitted.

    Returns
    -------
    (PrimalDualPoint, SolveDiagnostics)
        Final (z, w). The returned primal is the output of a projection, so
        it lies in D exactly.
    """
    n, m = prog.dim_primal, prog.dim_dual
    if warmstart is None:
        warmstart = PrimalDualPoint.zeros(prog)
    if warmstart.primal.shape != (n,) or warmstart.dual.shape != (m,):
        raise ValueError("warmstart dimensions do not match the program")

    P = prog.quad_diag
    q = prog.linear
    H = prog.eq_matrix
    Ht = H.T.tocsr()
    h = prog.eq_offset
    proj = ProductProjection(prog.sets, n)

    lam = float(P.max()) if n else 0.0
    sigma_est, power_ok = power_iteration(
        H, tol=settings.power_iter_tol, max_iter=settings.power_iter_max)
    sigma = sigma_est * settings.spectral_margin
    alpha, beta = step_sizes(lam, sigma, settings.omega)

    xi = warmstart.primal.copy()
    eta = warmstart.dual.copy()
    rho = settings.rho
    z = xi.copy()
    w = eta.copy()
    for k in range(1, settings.k_max + 1):
        z = proj(xi - alpha * (P * xi + q + Ht @ eta))
        w = eta + beta * (H @ (2.0 * z - xi) - h)
        if not np.isfinite(z).all() or not np.isfinite(w).all():
            raise PipgDivergedError(k)
        xi = (1.0 - rho) * xi + rho * z
        eta = (1.0 - rho) * eta + rho * w

    diag = SolveDiagnostics(
        eq_residual_inf=float(np.abs(H @ z - h).max()) if m else 0.0,
        objective=prog.objective(z),
        alpha=alpha,
        beta=beta,
        sigma_spectral=sigma,
        power_iter_converged=power_ok,
        iterations=settings.k_max,
    )
    return PrimalDualPoint(primal=z, dual=w), diag


def kkt_residuals(prog, point):
    """Equality and fixed-point residuals at a primal-dual point.

    primal_eq is ||Hz - h||_inf; stationarity is the unit-step projected
    gradient residual ||z - proj_D(z - (Pz + q + H'w))||_inf. Both vanish at
    an exact solution.
    """
    z, w = point.primal, point.dual
    if z.shape != (prog.dim_primal,) or w.shape != (prog.dim_dual,):
        raise ValueError("point dimensions do not match the program")
    proj = ProductProjection(prog.sets, prog.dim_primal)
    grad = prog.quad_diag * z + prog.linear + prog.eq_matrix.T @ w
    fixed = proj((z - grad).copy())
    primal_eq = float(np.abs(prog.eq_matrix @ z - prog.eq_offset).max()) \
        if prog.dim_dual else 0.0
    return {
        "primal_eq": primal_eq,
        "stationarity": float(np.abs(z - fixed).max()),
    }
