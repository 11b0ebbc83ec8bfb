"""Lagrange-multiplier machinery for constrained classical Hamiltonians.

Phase-space points are flat arrays laid out as ``(Q_0..Q_{n-1}, P_0..P_{n-1})``
with ``n = f + c`` degrees of freedom.  Scalar fields take arrays of shape
``(..., 2n)`` and return ``(...)``; gradients return ``(..., 2n)`` and Hessians
``(..., 2n, 2n)``, so every evaluator also works on a batch of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ZERO_TOL = 1e-7
ZERO_FLOOR = 1e-12
RANK_TOL = 1e-8


class DegenerateConstraint(ValueError):
    """Constraint gradients are (numerically) linearly dependent at a point."""


@dataclass(frozen=True)
class ScalarField:
    """A smooth function with exact first and second derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]

    def __call__(self, X):
        return self.value(X)


@dataclass(frozen=True)
class Constraint(ScalarField):
    """Scalar constraint whose surface is ``value(X) == 0``."""

    name: str = "phi"


@dataclass(frozen=True)
class ConstrainedSystem:
    """Hamiltonian on the full phase space plus an ordered list of constraints.

    ``invariants`` maps points to quantities constant along the symmetry
    orbits generated by the constraints; it feeds the deduplication
    signature used by the stationary-point solver.  ``tag`` identifies the
    model family.
    """

    dof_total: int
    hamiltonian: ScalarField
    constraints: tuple[Constraint, ...] = ()
    invariants: Callable[[np.ndarray], np.ndarray] | None = None
    tag: str = "generic"
    params: dict = field(default_factory=dict)
    euler_characteristic: int | None = None
    sample_surface: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not 0 <= self.n_constraints < self.dof_total:
            raise ValueError(
                f"need 0 <= c < f+c, got c={self.n_constraints}, f+c={self.dof_total}"
            )

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def dim(self) -> int:
        return 2 * self.dof_total

    @property
    def f(self) -> int:
        return self.dof_total - self.n_constraints

    def constraint_values(self, X):
        X = np.asarray(X, dtype=float)
        if not self.constraints:
            return np.zeros(X.shape[:-1] + (0,))
        return np.stack([phi.value(X) for phi in self.constraints], axis=-1)

    def constraint_gradients(self, X):
        """Gradient stack of shape ``(..., c, 2n)``."""
        X = np.asarray(X, dtype=float)
        if not self.constraints:
            return np.zeros(X.shape[:-1] + (0, self.dim))
        return np.stack([phi.gradient(X) for phi in self.constraints], axis=-2)


def _check(sys: ConstrainedSystem, X, lam):
    X = np.asarray(X, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if X.shape[-1] != sys.dim:
        raise ValueError(f"point has length {X.shape[-1]}, expected {sys.dim}")
    if lam.shape[-1:] != (sys.n_constraints,):
        raise ValueError(
            f"got {lam.shape[-1:]} multipliers for {sys.n_constraints} constraints"
        )
    return X, lam


def lagrange_value(sys: ConstrainedSystem, X, lam):
    """``L = H + sum_a lam_a Phi_a``."""
    X, lam = _check(sys, X, lam)
    return sys.hamiltonian.value(X) + np.sum(lam * sys.constraint_values(X), axis=-1)


def lagrange_gradient(sys: ConstrainedSystem, X, lam):
    """Gradient of L with respect to ``(X, lam)``; zero at constrained stationary points."""
    X, lam = _check(sys, X, lam)
    gX = sys.hamiltonian.gradient(X)
    if sys.n_constraints:
        gX = gX + np.einsum("...a,...ai->...i", lam, sys.constraint_gradients(X))
    return np.concatenate([gX, sys.constraint_values(X)], axis=-1)


def lagrange_hessian(sys: ConstrainedSystem, X, lam):
    """Hessian of L with respect to X only (multipliers held fixed)."""
    X, lam = _check(sys, X, lam)
    hess = sys.hamiltonian.hessian(X)
    for a, phi in enumerate(sys.constraints):
        hess = hess + lam[..., a, None, None] * phi.hessian(X)
    return hess


def lagrange_jacobian(sys: ConstrainedSystem, X, lam):
    """Jacobian of :func:`lagrange_gradient`, i.e. the bordered Hessian."""
    X, lam = _check(sys, X, lam)
    c, d = sys.n_constraints, sys.dim
    jac = np.zeros(X.shape[:-1] + (d + c, d + c))
    jac[..., :d, :d] = lagrange_hessian(sys, X, lam)
    grads = sys.constraint_gradients(X)
    jac[..., :d, d:] = np.swapaxes(grads, -1, -2)
    jac[..., d:, :d] = grads
    return jac


def constraint_frame(sys: ConstrainedSystem, X, completion=None):
    """Orthonormal basis of the tangent space of the constraint surface at X.

    The constraint gradients are orthonormalised first, then candidate
    vectors (canonical basis by default, or the columns of ``completion``)
    are appended with modified Gram-Schmidt; near-dependent candidates are
    dropped.  Returns the ``2n x (2n - c)`` matrix of tangent columns.

    Raises
    ------
    DegenerateConstraint
        If the gradients are rank deficient at X.
    """
    X = np.asarray(X, dtype=float)
    d, c = sys.dim, sys.n_constraints
    grads = sys.constraint_gradients(X)
    if c:
        sv = np.linalg.svd(grads, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] < RANK_TOL * sv[0]:
            raise DegenerateConstraint(
                f"constraint gradients rank deficient at X (singular values {sv})"
            )
    candidates = np.eye(d) if completion is None else np.asarray(completion, float).T
    basis: list[np.ndarray] = []
    for v in list(grads) + list(candidates):
        w = np.array(v, dtype=float)
        norm0 = np.linalg.norm(w)
        if norm0 == 0.0:
            continue
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for b in basis:
                w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-8 * norm0:
            basis.append(w / norm)
        if len(basis) == d:
            break
    if len(basis) < d:
        raise ValueError("completion vectors do not span the phase space")
    return np.array(basis[c:]).T


def restricted_hessian(sys: ConstrainedSystem, X, lam, B):
    """``B^T D^2L(X, lam) B`` for a tangent frame B from :func:`constraint_frame`."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != sys.dim:
        raise ValueError(f"frame has {B.shape[0]} rows, expected {sys.dim}")
    M = B.T @ lagrange_hessian(sys, X, lam) @ B
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class IndexInfo:
    index: int
    zero_count: int
    degenerate: bool
    eigenvalues: np.ndarray


def stationary_index(M, c: int, zero_tol: float = ZERO_TOL, floor: float = ZERO_FLOOR):
    """Morse index of a symmetric matrix with ``c`` expected structural zeros.

    Eigenvalues are called zero when ``|e| <= zero_tol * max(max|e|, floor)``.
    Returns ``(r, zero_count, degenerate)``.
    """
    info = index_info(M, c, zero_tol, floor)
    return info.index, info.zero_count, info.degenerate


def index_info(M, c: int, zero_tol: float = ZERO_TOL, floor: float = ZERO_FLOOR) -> IndexInfo:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(M, M.T, rtol=0, atol=1e-9 * max(1.0, np.abs(M).max())):
        raise ValueError("matrix is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    scale = max(np.abs(eig).max(initial=0.0), floor)
    thr = zero_tol * scale
    r = int(np.sum(eig < -thr))
    zeros = int(np.sum(np.abs(eig) <= thr))
    return IndexInfo(r, zeros, zeros > c, eig)


@dataclass(frozen=True)
class SingularityType:
    """Shape of the level-density singularity caused by a stationary point.

    ``sign`` multiplies a Heaviside step (``kind == "jump"``) or
    ``ln|E - E_st|`` (``kind == "log"``) in the ``derivative_order``-th energy
    derivative of the smooth density.
    """

    derivative_order: int
    kind: str
    sign: int
    orientation: str


def classify_singularity(r: int, f: int) -> SingularityType:
    if f < 1:
        raise ValueError("need at least one degree of freedom")
    if not 0 <= r <= 2 * f:
        raise ValueError(f"index {r} outside [0, {2 * f}]")
    if r % 2 == 0:
        sign = (-1) ** (r // 2)
        return SingularityType(f - 1, "jump", sign, "up" if sign > 0 else "down")
    sign = (-1) ** ((r + 1) // 2)
    # ln|x| -> -inf at the point, so a negative coefficient means an upward peak
    return SingularityType(f - 1, "log", sign, "up" if sign < 0 else "down")


@dataclass
class StationaryPoint:
    """A converged constrained stationary point and its classification."""

    point: np.ndarray
    multipliers: np.ndarray
    energy: float
    index: int
    zero_count: int
    degenerate: bool
    signature: np.ndarray
    residual: float = 0.0
    regular: bool = True
    hessian_eigenvalues: np.ndarray | None = None
    chart: int | None = None
    chart_coords: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "energy": float(self.energy),
            "index": int(self.index),
            "zero_count": int(self.zero_count),
            "degenerate": bool(self.degenerate),
            "point": [float(v) for v in self.point],
            "multipliers": [float(v) for v in self.multipliers],
            "signature": [float(v) for v in self.signature],
            "regular": bool(self.regular),
            "chart": self.chart,
        }


def classify_point(sys: ConstrainedSystem, X, lam, zero_tol: float = ZERO_TOL):
    """Index data at ``(X, lam)`` from the Hessian restricted to the surface.

    Where the constraint gradients are rank deficient the frame is built
    from their numerical range instead and the point is marked irregular
    (returned ``regular`` flag False) and degenerate.
    """
    X = np.asarray(X, dtype=float)
    try:
        B = constraint_frame(sys, X)
        regular = True
    except DegenerateConstraint:
        B = _rank_revealed_frame(sys, X)
        regular = False
    info = index_info(restricted_hessian(sys, X, lam, B), sys.n_constraints, zero_tol)
    degenerate = info.degenerate or not regular
    return info, degenerate, regular


def _rank_revealed_frame(sys: ConstrainedSystem, X):
    grads = sys.constraint_gradients(X)
    d = sys.dim
    if grads.shape[0] == 0:
        return np.eye(d)
    _, s, vt = np.linalg.svd(grads)
    rank = int(np.sum(s > RANK_TOL * max(s[0], 1e-300))) if s[0] > 0 else 0
    _, _, vt_full = np.linalg.svd(np.vstack([vt[:rank], np.zeros((d - rank, d))]))
    return vt_full[rank:].T


def finite_difference_gradient(fun: Callable, X, step: float = 1e-5):
    """Central-difference gradient of a scalar function (test oracle)."""
    X = np.asarray(X, dtype=float)
    g = np.empty_like(X)
    for i in range(X.size):
        e = np.zeros_like(X)
        e[i] = step
        g[i] = (fun(X + e) - fun(X - e)) / (2 * step)
    return g


def finite_difference_hessian(grad: Callable, X, step: float = 1e-5):
    """Central differences of an exact gradient, symmetrised (test oracle)."""
    X = np.asarray(X, dtype=float)
    n = X.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros_like(X)
        e[i] = step
        H[:, i] = (np.asarray(grad(X + e)) - np.asarray(grad(X - e))) / (2 * step)
    return 0.5 * (H + H.T)


def multipliers_from_gradient(sys: ConstrainedSystem, X):
    """Least-squares multipliers minimising ``|grad H + sum lam grad Phi|``."""
    X = np.asarray(X, dtype=float)
    c = sys.n_constraints
    if c == 0:
        return np.zeros(X.shape[:-1] + (0,))
    G = sys.constraint_gradients(X)  # (..., c, d)
    gH = sys.hamiltonian.gradient(X)
    A = np.swapaxes(G, -1, -2)  # (..., d, c)
    AtA = G @ A
    Atb = -(G @ gH[..., None])[..., 0]
    AtA = AtA + 1e-14 * np.eye(c)
    return np.linalg.solve(AtA, Atb[..., None])[..., 0]
