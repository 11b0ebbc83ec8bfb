"""Classical Holstein-Primakoff charts for fixed-N bosonic phase spaces.

Chart ``j`` eliminates boson ``j``: the pair ``X_j = (Q_j, P_j)`` is rotated
onto the positive Q axis and every other pair is rotated along with it, which
leaves a 2f-dimensional ball ``s^2 = sum_{k != j} |x_k|^2 <= 2``.  Chart
coordinates are stored as ``(q_k for k != j, p_k for k != j)``.

The map is singular where ``X_j = 0``; those points form the boundary of the
ball and must be handled in another chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import u3
from .core import StationaryPoint, index_info
from .solver import SolverConfig, cluster, newton_batch, signature_of

BOUNDARY_TOL = 1e-6
MARGIN = 1e-4
SURFACE_TOL = 1e-8
W = np.array([[0.0, 1.0], [-1.0, 0.0]])


class BoundarySingularity(ValueError):
    """The eliminated boson is (nearly) unoccupied; the chart is singular here."""


@dataclass(frozen=True)
class ChartPoint:
    chart: int
    coords: np.ndarray

    @property
    def f(self) -> int:
        return self.coords.shape[-1] // 2

    @property
    def s2(self):
        return np.sum(self.coords**2, axis=-1)

    def pair(self, k: int) -> np.ndarray:
        """``(q_k, p_k)`` in the original boson labelling (``k != chart``)."""
        i = _slot(self.chart, k)
        return self.coords[..., [i, self.f + i]]


def _slot(j: int, k: int) -> int:
    if k == j:
        raise ValueError(f"boson {k} is eliminated in chart {j}")
    return k if k < j else k - 1


def _pairs(X):
    """Split ``(Q.., P..)`` into an array of pairs of shape ``(..., n, 2)``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1] // 2
    return np.stack([X[..., :n], X[..., n:]], axis=-1)


def _unpairs(Z):
    return np.concatenate([Z[..., 0], Z[..., 1]], axis=-1)


def _others(n: int, j: int) -> list[int]:
    return [k for k in range(n) if k != j]


def hp_forward(j: int, X, boundary_tol: float = BOUNDARY_TOL, surface_tol: float = SURFACE_TOL) -> ChartPoint:
    """Map a point on the sphere into chart ``j``."""
    X = np.asarray(X, dtype=float)
    Z = _pairs(X)
    n = Z.shape[-2]
    if not 0 <= j < n:
        raise ValueError(f"chart {j} out of range for {n} bosons")
    if np.any(np.abs(0.5 * np.sum(X**2, axis=-1) - 1.0) > surface_tol):
        raise ValueError("point is not on the constraint sphere")
    xj = Z[..., j, :]
    r = np.linalg.norm(xj, axis=-1)
    if np.any(r < boundary_tol):
        raise BoundarySingularity(f"|X_{j}| below {boundary_tol}")
    rest = Z[..., _others(n, j), :]
    q = np.einsum("...a,...ka->...k", xj, rest) / r[..., None]
    p = np.einsum("...a,ab,...kb->...k", xj, W, rest) / r[..., None]
    return ChartPoint(j, np.concatenate([q, p], axis=-1))


def hp_inverse(j: int, x, phase: float = 0.0):
    """Reconstruct a sphere point from chart coordinates with cyclic phase fixed.

    ``x`` may be a :class:`ChartPoint` or a raw coordinate array.
    """
    coords = x.coords if isinstance(x, ChartPoint) else np.asarray(x, dtype=float)
    f = coords.shape[-1] // 2
    s2 = np.sum(coords**2, axis=-1)
    if np.any(s2 > 2.0 + 1e-12):
        raise ValueError("chart point lies outside the ball s^2 <= 2")
    R = np.sqrt(np.clip(2.0 - s2, 0.0, None))
    c, s = np.cos(phase), np.sin(phase)
    rot = np.array([[c, -s], [s, c]])
    xk = np.stack([coords[..., :f], coords[..., f:]], axis=-1)  # (..., f, 2)
    Z = np.empty(coords.shape[:-1] + (f + 1, 2))
    Z[..., j, :] = np.array([c, s]) * R[..., None]
    Z[..., _others(f + 1, j), :] = np.einsum("ab,...kb->...ka", rot, xk)
    return _unpairs(Z)


def hp_transition(j: int, jp: int, x: ChartPoint, boundary_tol: float = BOUNDARY_TOL) -> ChartPoint:
    """Change coordinates from chart ``j`` to chart ``jp`` directly."""
    if x.chart != j:
        raise ValueError(f"point belongs to chart {x.chart}, not {j}")
    if j == jp:
        return ChartPoint(jp, np.array(x.coords, dtype=float))
    coords = np.asarray(x.coords, dtype=float)
    f = x.f
    xjp = x.pair(jp)
    rho = np.linalg.norm(xjp, axis=-1)
    if np.any(rho < boundary_tol):
        raise BoundarySingularity(f"|x_{jp}| below {boundary_tol} in chart {j}")
    R = np.sqrt(np.clip(2.0 - np.sum(coords**2, axis=-1), 0.0, None))
    new = np.empty(coords.shape[:-1] + (f + 1, 2))
    for k in range(f + 1):
        if k == jp:
            continue
        if k == j:
            new[..., k, 0] = xjp[..., 0] * R / rho
            new[..., k, 1] = -xjp[..., 1] * R / rho
        else:
            xk = x.pair(k)
            new[..., k, 0] = np.einsum("...a,...a->...", xjp, xk) / rho
            new[..., k, 1] = np.einsum("...a,ab,...b->...", xjp, W, xk) / rho
    others = _others(f + 1, jp)
    out = np.concatenate([new[..., others, 0], new[..., others, 1]], axis=-1)
    return ChartPoint(jp, out)


def eta_coords(point) -> np.ndarray:
    """Signed radial coordinates ``sign(Q_k) sign(P_k) sqrt(2 n_k)``.

    Accepts a full phase-space point or a :class:`ChartPoint` (whose
    eliminated component is evaluated at phase zero).
    """
    if isinstance(point, ChartPoint):
        point = hp_inverse(point.chart, point)
    X = np.asarray(point, dtype=float)
    n = X.shape[-1] // 2
    Q, P = X[..., :n], X[..., n:]
    sign = np.where(Q >= 0, 1.0, -1.0) * np.where(P >= 0, 1.0, -1.0)
    return sign * np.sqrt(Q**2 + P**2)


# ---------------------------------------------------------------------------
# Reduced u(3) Hamiltonians


def reduced_h(j: int, params: u3.U3Params, x):
    """Closed-form u(3) Hamiltonian in chart ``j`` (pullback at phase zero)."""
    coords = x.coords if isinstance(x, ChartPoint) else np.asarray(x, dtype=float)
    xi, eps = params.xi, params.eps
    s2 = np.sum(coords**2, axis=-1)
    if np.any(s2 > 2.0 + 1e-12):
        raise ValueError("chart point lies outside the ball s^2 <= 2")
    R2 = np.clip(2.0 - s2, 0.0, None)
    R = np.sqrt(R2)
    a, b = coords[..., 0], coords[..., 1]  # q of the two surviving bosons
    pa, pb = coords[..., 2], coords[..., 3]
    cross = pb * a - pa * b
    if j == 0:
        # survivors (1, 2)
        return 0.5 * (1 - xi) * s2 - xi * ((pa**2 + pb**2) * R2 + cross**2) - eps * pb * R
    if j == 1:
        # survivors (0, 2)
        return (
            0.5 * (1 - xi) * (2.0 - a**2 - pa**2)
            - xi * ((pa**2 + pb**2) * R2 + cross**2)
            - eps * cross
        )
    if j == 2:
        # survivors (0, 1)
        return (
            0.5 * (1 - xi) * (2.0 - a**2 - pa**2)
            - xi * ((pa**2 + pb**2) * R2 + cross**2)
            + eps * pa * R
        )
    raise ValueError(f"chart {j} out of range for the u(3) model")


def _embedding_jacobian(j: int, coords):
    """``dX/dx`` of the phase-zero inverse map, shape ``(..., 6, 4)``."""
    f = coords.shape[-1] // 2
    n = f + 1
    R = np.sqrt(2.0 - np.sum(coords**2, axis=-1))
    J = np.zeros(coords.shape[:-1] + (2 * n, 2 * f))
    for i, k in enumerate(_others(n, j)):
        J[..., k, i] = 1.0
        J[..., n + k, f + i] = 1.0
    J[..., j, :] = -coords / R[..., None]
    return J, R


def reduced_h_gradient(j: int, params: u3.U3Params, coords):
    coords = np.asarray(coords, dtype=float)
    X = hp_inverse(j, coords)
    J, _ = _embedding_jacobian(j, coords)
    return np.einsum("...ia,...i->...a", J, u3.classical_h_gradient(params, X))


def reduced_h_hessian(j: int, params: u3.U3Params, coords):
    coords = np.asarray(coords, dtype=float)
    X = hp_inverse(j, coords)
    J, R = _embedding_jacobian(j, coords)
    gH = u3.classical_h_gradient(params, X)
    hess = np.einsum("...ia,...ij,...jb->...ab", J, u3.classical_h_hessian(params, X), J)
    m = coords.shape[-1]
    d2R = -np.eye(m) / R[..., None, None] - coords[..., :, None] * coords[..., None, :] / R[..., None, None] ** 3
    return hess + gH[..., j, None, None] * d2R


def sample_ball(rng: np.random.Generator, n: int, f: int = 2, radius: float = np.sqrt(2.0)):
    """Uniform samples in the 2f-dimensional ball."""
    g = rng.standard_normal((n, 2 * f))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random(n)[:, None] ** (1.0 / (2 * f))


def chart_stationary(
    j: int,
    params: u3.U3Params,
    cfg: SolverConfig | None = None,
    margin: float = MARGIN,
) -> list[StationaryPoint]:
    """Stationary points of the reduced Hamiltonian inside chart ``j``.

    Newton iterates are kept inside ``s^2 < 2 - margin``; roots found closer
    to the boundary belong to another chart and are not reported.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng([cfg.seed, j])
    x0 = sample_ball(rng, cfg.n_starts) * np.sqrt(1 - margin / 2)

    def inside(x):
        return np.sum(x**2, axis=-1) < 2.0 - margin

    x, norm = newton_batch(
        lambda x: reduced_h_gradient(j, params, x),
        lambda x: reduced_h_hessian(j, params, x),
        x0,
        cfg.max_iter,
        cfg.residual_tol,
        cfg.sv_truncation,
        feasible=inside,
    )
    ok = (norm <= cfg.residual_tol) & inside(x)
    if not ok.any():
        return []
    x, norm = x[ok], norm[ok]
    X = hp_inverse(j, x)
    E = reduced_h(j, params, x)
    system = u3.u3_system(params)
    sig = signature_of(system, X, E)
    labels = cluster(sig, cfg.dedupe_tol)
    points = []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        best = members[np.argmin(norm[members])]
        points.append(_chart_point(j, params, x[best], system, float(norm[best])))
    points.sort(key=lambda p: (round(p.energy, 9), tuple(np.round(p.signature, 9))))
    return points


def _chart_point(j, params, coords, system, residual):
    info = index_info(reduced_h_hessian(j, params, coords), 0)
    X = hp_inverse(j, coords)
    E = float(reduced_h(j, params, coords))
    return StationaryPoint(
        point=X,
        multipliers=np.zeros(0),
        energy=E,
        index=info.index,
        zero_count=info.zero_count,
        degenerate=info.degenerate,
        signature=signature_of(system, X, E),
        residual=residual,
        hessian_eigenvalues=info.eigenvalues,
        chart=j,
        chart_coords=np.array(coords),
    )


def atlas_stationary(params: u3.U3Params, cfg: SolverConfig | None = None) -> list[StationaryPoint]:
    """Union of the in-chart stationary points over all three charts.

    Points seen in several charts are merged by orbit signature; the copy
    farthest from its chart boundary is kept.
    """
    cfg = cfg or SolverConfig()
    found = [p for j in range(3) for p in chart_stationary(j, params, cfg)]
    if not found:
        return []
    labels = cluster(np.array([p.signature for p in found]), cfg.dedupe_tol)
    merged = []
    for lab in np.unique(labels):
        group = [found[i] for i in np.flatnonzero(labels == lab)]
        merged.append(min(group, key=lambda p: float(np.sum(p.chart_coords**2))))
    merged.sort(key=lambda p: (round(p.energy, 9), tuple(np.round(p.signature, 9))))
    return merged
