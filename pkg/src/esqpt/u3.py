"""Classical limit of the u(3) boson model.

Coordinates are ``(Q0, Q1, Q2, P0, P1, P2)``.  Energies are per boson
excitation.  All evaluators accept a single point or a batch ``(..., 6)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConstrainedSystem, Constraint, ScalarField

NDOF = 3


@dataclass(frozen=True)
class U3Params:
    xi: float
    eps: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")


def _omega_matrix(k: int, l: int) -> np.ndarray:
    """Symmetric S with ``X^T S X = P_k Q_l - P_l Q_k``."""
    S = np.zeros((2 * NDOF, 2 * NDOF))
    S[NDOF + k, l] += 0.5
    S[l, NDOF + k] += 0.5
    S[NDOF + l, k] -= 0.5
    S[k, NDOF + l] -= 0.5
    return S


S10 = _omega_matrix(1, 0)
S12 = _omega_matrix(1, 2)
S20 = _omega_matrix(2, 0)
_CASIMIR = (S10, S12, S20)
_D12 = np.diag([0.0, 1.0, 1.0, 0.0, 1.0, 1.0])


def _quad(S, X):
    return np.einsum("...i,ij,...j->...", X, S, X)


def omega(X, k: int, l: int):
    """``P_k Q_l - P_l Q_k``."""
    X = np.asarray(X, dtype=float)
    return X[..., NDOF + k] * X[..., l] - X[..., NDOF + l] * X[..., k]


def occupations(X):
    """Relative occupations ``n_k = (Q_k^2 + P_k^2) / 2``, shape ``(..., 3)``."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X[..., :NDOF] ** 2 + X[..., NDOF:] ** 2)


def angular_momentum(X):
    """``l = P1 Q2 - P2 Q1``."""
    return omega(X, 1, 2)


def classical_h(params: U3Params, X):
    X = np.asarray(X, dtype=float)
    xi, eps = params.xi, params.eps
    n12 = 0.5 * _quad(_D12, X)
    cas = sum(_quad(S, X) ** 2 for S in _CASIMIR)
    return (1 - xi) * n12 - xi * cas - eps * _quad(S20, X)


def classical_h_gradient(params: U3Params, X):
    X = np.asarray(X, dtype=float)
    xi, eps = params.xi, params.eps
    g = (1 - xi) * X @ _D12
    for S in _CASIMIR:
        g = g - 4 * xi * _quad(S, X)[..., None] * (X @ S)
    return g - 2 * eps * (X @ S20)


def classical_h_hessian(params: U3Params, X):
    X = np.asarray(X, dtype=float)
    xi, eps = params.xi, params.eps
    hess = np.broadcast_to((1 - xi) * _D12, X.shape[:-1] + _D12.shape).copy()
    for S in _CASIMIR:
        v = X @ S
        hess -= xi * (8 * v[..., :, None] * v[..., None, :] + 4 * _quad(S, X)[..., None, None] * S)
    return hess - 2 * eps * S20


def phi_n(X):
    """Particle-number constraint, zero on the sphere of radius sqrt(2)."""
    X = np.asarray(X, dtype=float)
    return 0.5 * np.sum(X**2, axis=-1) - 1.0


def phi_n_gradient(X):
    return np.array(X, dtype=float)


def phi_n_hessian(X):
    X = np.asarray(X, dtype=float)
    return np.broadcast_to(np.eye(2 * NDOF), X.shape[:-1] + (2 * NDOF, 2 * NDOF)).copy()


def phi_l(X, ell: float, branch: int = 1):
    """Unsquared angular-momentum constraint ``l(X) - branch * ell``."""
    return angular_momentum(X) - branch * ell


def phi_l_gradient(X):
    X = np.asarray(X, dtype=float)
    return 2 * X @ S12


def phi_l_hessian(X):
    X = np.asarray(X, dtype=float)
    return np.broadcast_to(2 * S12, X.shape[:-1] + S12.shape).copy()


def hamiltonian_field(params: U3Params) -> ScalarField:
    return ScalarField(
        lambda X: classical_h(params, X),
        lambda X: classical_h_gradient(params, X),
        lambda X: classical_h_hessian(params, X),
    )


PHI_N = Constraint(phi_n, phi_n_gradient, phi_n_hessian, name="phi_N")


def l_constraint(ell: float, branch: int = 1) -> Constraint:
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    return Constraint(
        lambda X: phi_l(X, ell, branch), phi_l_gradient, phi_l_hessian, name="phi_l"
    )


def invariants(X):
    """``(n0, n1, n2, l)``: constant on the global U(1) phase orbit."""
    X = np.asarray(X, dtype=float)
    return np.concatenate([occupations(X), angular_momentum(X)[..., None]], axis=-1)


def o2_invariants(X):
    """Invariants of U(1) x O(2), the symmetry group at zero field.

    ``(n0, n1 + n2, l, Re w, Im w)`` with ``w = z0^2 conj(z1^2 + z2^2)`` and
    ``z_k = (Q_k + i P_k) / sqrt(2)``.
    """
    X = np.asarray(X, dtype=float)
    n = occupations(X)
    z = (X[..., :NDOF] + 1j * X[..., NDOF:]) / np.sqrt(2)
    w = z[..., 0] ** 2 * np.conj(z[..., 1] ** 2 + z[..., 2] ** 2)
    return np.stack(
        [n[..., 0], n[..., 1] + n[..., 2], angular_momentum(X), w.real, w.imag], axis=-1
    )


def u3_system(params: U3Params, ell: float | None = None, branch: int = 1) -> ConstrainedSystem:
    """The u(3) Hamiltonian constrained to fixed N, optionally also to fixed l.

    At zero field the extra O(2) symmetry makes stationary points come in
    continuous families; deduplication then uses O(2)-invariant data.
    """
    constraints = [PHI_N]
    if ell is not None:
        if not 0.0 <= ell <= 1.0:
            raise ValueError(f"ell must lie in [0, 1], got {ell}")
        constraints.append(l_constraint(ell, branch))
    inv = o2_invariants if params.eps == 0.0 else invariants
    if ell is None:
        chi = 3  # reduced space is CP^2
    else:
        chi = 2 if ell > 0 else None  # a 2-sphere; singular at ell = 0
    return ConstrainedSystem(
        dof_total=NDOF,
        hamiltonian=hamiltonian_field(params),
        constraints=tuple(constraints),
        invariants=inv,
        tag="u3",
        params={"xi": params.xi, "eps": params.eps, "ell": ell, "branch": branch},
        euler_characteristic=chi,
        sample_surface=sample_sphere,
    )


def sample_sphere(rng: np.random.Generator, n: int):
    """Uniform points on the radius-sqrt(2) sphere in the 6-dim phase space."""
    g = rng.standard_normal((n, 2 * NDOF))
    return np.sqrt(2.0) * g / np.linalg.norm(g, axis=1, keepdims=True)


def orbit_signature(X, E):
    """``(E, n0, n1, n2, l)`` for the u(3) model."""
    X = np.asarray(X, dtype=float)
    E = np.broadcast_to(np.asarray(E, dtype=float), X.shape[:-1])
    return np.concatenate([E[..., None], invariants(X)], axis=-1)


def phase_rotate(X, theta: float):
    """Apply the global U(1) phase rotation to every (Q_k, P_k) pair."""
    X = np.asarray(X, dtype=float)
    Q, P = X[..., :NDOF], X[..., NDOF:]
    c, s = np.cos(theta), np.sin(theta)
    return np.concatenate([c * Q - s * P, s * Q + c * P], axis=-1)


def o2_rotate(X, alpha: float):
    """Rotate bosons 1 and 2 into each other (positions and momenta alike)."""
    X = np.array(X, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    for off in (0, NDOF):
        a, b = X[..., off + 1].copy(), X[..., off + 2].copy()
        X[..., off + 1] = c * a - s * b
        X[..., off + 2] = s * a + c * b
    return X
