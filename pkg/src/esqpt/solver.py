"""Multistart root finding for constrained stationary points.

Every start is driven to a root of ``grad L = 0`` by damped Newton steps
computed with a truncated-SVD pseudo-inverse of the bordered Hessian.  The
Jacobian is singular along the symmetry orbits of the constraints, so the
minimum-norm step simply lands on some representative of the orbit.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConstrainedSystem,
    StationaryPoint,
    classify_point,
    lagrange_gradient,
    lagrange_jacobian,
    multipliers_from_gradient,
)

log = logging.getLogger(__name__)

_STEPS = 0.5 ** np.arange(8)


@dataclass(frozen=True)
class SolverConfig:
    n_starts: int = 2000
    max_iter: int = 200
    residual_tol: float = 1e-10
    dedupe_tol: float = 1e-7
    seed: int = 20240611
    sv_truncation: float = 1e-10
    workers: int | None = None

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        for name in ("residual_tol", "dedupe_tol", "sv_truncation"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def worker_count(requested: int | None = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("ESQPT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def pinv_solve(J, F, rcond: float):
    """Minimum-norm least-squares solution of ``J x = F`` for a batch."""
    U, s, Vt = np.linalg.svd(J)
    cutoff = rcond * s[..., :1]
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    coef = np.einsum("...ji,...j->...i", U, F) * inv
    return np.einsum("...ji,...j->...i", Vt, coef)


def newton_batch(
    residual: Callable,
    jacobian: Callable,
    Z0,
    max_iter: int,
    tol: float,
    rcond: float,
    feasible: Callable | None = None,
):
    """Damped Newton on a batch of starts ``Z0`` of shape ``(n, m)``.

    The step length is halved (at most 7 times) until the residual norm
    decreases; if no trial improves, the shortest step is taken anyway.
    ``feasible`` optionally rejects trial points (e.g. outside a chart).
    Returns final points and residual norms.
    """
    Z = np.array(Z0, dtype=float)
    F = residual(Z)
    norm = np.linalg.norm(F, axis=-1)
    active = norm > tol
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Za, Fa, na = Z[idx], F[idx], norm[idx]
        step = -pinv_solve(jacobian(Za), Fa, rcond)
        best_Z, best_F, best_n = Za.copy(), Fa.copy(), na.copy()
        done = np.zeros(idx.size, dtype=bool)
        for alpha in _STEPS:
            trial = Za + alpha * step
            ok = ~done if feasible is None else ~done & feasible(trial)
            Ft = np.full_like(Fa, np.inf)
            if ok.any():
                Ft[ok] = residual(trial[ok])
            nt = np.linalg.norm(Ft, axis=-1)
            ok &= np.isfinite(nt)
            accept = ~done & ok & (nt < (1 - 1e-4 * alpha) * na)
            best_Z[accept], best_F[accept], best_n[accept] = trial[accept], Ft[accept], nt[accept]
            done |= accept
            if done.all():
                break
        stuck = ~done
        Z[idx], F[idx], norm[idx] = best_Z, best_F, best_n
        active[idx[stuck]] = False
        active[idx] &= norm[idx] > tol
    return Z, norm


def _solve_chunk(sys: ConstrainedSystem, X0, cfg: SolverConfig):
    d, c = sys.dim, sys.n_constraints
    lam0 = multipliers_from_gradient(sys, X0)
    Z0 = np.concatenate([X0, lam0], axis=1)

    def residual(Z):
        return lagrange_gradient(sys, Z[:, :d], Z[:, d:])

    def jacobian(Z):
        return lagrange_jacobian(sys, Z[:, :d], Z[:, d:])

    Z, norm = newton_batch(residual, jacobian, Z0, cfg.max_iter, cfg.residual_tol, cfg.sv_truncation)
    return Z, norm


def signature_of(sys: ConstrainedSystem, X, E):
    X = np.asarray(X, dtype=float)
    E = np.asarray(E, dtype=float)
    if sys.invariants is None:
        return E[..., None]
    return np.concatenate([E[..., None], sys.invariants(X)], axis=-1)


def cluster(signatures, tol: float) -> np.ndarray:
    """Label rows so that rows within max-norm distance ``tol`` share a label.

    Leader clustering in energy order: each row joins the first existing
    cluster whose leader is within ``tol``, otherwise it starts a new one.
    """
    sig = np.asarray(signatures, dtype=float)
    labels = np.empty(len(sig), dtype=int)
    leaders: list[int] = []
    lead = np.empty((0, sig.shape[1]))
    for i in np.argsort(sig[:, 0], kind="stable"):
        if leaders:
            close = np.flatnonzero(np.max(np.abs(lead - sig[i]), axis=1) <= tol)
            if close.size:
                labels[i] = leaders[close[0]]
                continue
        leaders.append(i)
        lead = np.vstack([lead, sig[i]])
        labels[i] = i
    return labels


def _sort_key(p: StationaryPoint):
    return (round(float(p.energy), 9), tuple(np.round(p.signature, 9)))


def solve_stationary(sys: ConstrainedSystem, cfg: SolverConfig | None = None) -> list[StationaryPoint]:
    """All constrained stationary points reached from ``cfg.n_starts`` random starts.

    Starts are drawn on the constraint surface (``sys.sample_surface``) or
    from a standard normal otherwise.  Converged roots are deduplicated by
    their orbit signature and classified by the restricted Hessian.  Starts
    that fail to converge are dropped.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(cfg.seed)
    if sys.sample_surface is not None:
        X0 = sys.sample_surface(rng, cfg.n_starts)
    else:
        X0 = rng.standard_normal((cfg.n_starts, sys.dim))

    workers = worker_count(cfg.workers)
    chunks = np.array_split(np.arange(cfg.n_starts), workers)
    if workers == 1:
        results = [_solve_chunk(sys, X0, cfg)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda ix: _solve_chunk(sys, X0[ix], cfg), chunks))
    Z = np.concatenate([r[0] for r in results])
    norm = np.concatenate([r[1] for r in results])
    ok = norm <= cfg.residual_tol
    log.debug("%d of %d starts converged", ok.sum(), cfg.n_starts)
    if not ok.any():
        return []
    d = sys.dim
    Zc, nc = Z[ok], norm[ok]
    X, lam = Zc[:, :d], Zc[:, d:]
    E = sys.hamiltonian.value(X)
    sig = signature_of(sys, X, E)
    labels = cluster(sig, cfg.dedupe_tol)
    points = []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        best = members[np.argmin(nc[members])]
        points.append(make_point(sys, X[best], lam[best], residual=float(nc[best])))
    points.sort(key=_sort_key)
    return points


def make_point(sys: ConstrainedSystem, X, lam, residual: float = 0.0) -> StationaryPoint:
    X = np.asarray(X, dtype=float)
    lam = np.asarray(lam, dtype=float)
    E = float(sys.hamiltonian.value(X))
    info, degenerate, regular = classify_point(sys, X, lam)
    return StationaryPoint(
        point=X,
        multipliers=lam,
        energy=E,
        index=info.index,
        zero_count=info.zero_count,
        degenerate=degenerate,
        signature=signature_of(sys, X, E),
        residual=residual,
        regular=regular,
        hessian_eigenvalues=info.eigenvalues,
    )


def morse_sum(points: Sequence[StationaryPoint]) -> int | None:
    """Alternating index sum, or None if any point is degenerate."""
    if any(p.degenerate for p in points):
        return None
    return int(sum((-1) ** p.index for p in points))


def morse_check(sys: ConstrainedSystem, points: Sequence[StationaryPoint]) -> bool | None:
    """Compare the alternating index sum with the Euler characteristic.

    Emits a warning on mismatch (a likely missed stationary point).  Returns
    None when the check does not apply.
    """
    chi = sys.euler_characteristic
    total = morse_sum(points)
    if chi is None or total is None:
        return None
    if total != chi:
        warnings.warn(
            f"Morse sum {total} differs from Euler characteristic {chi}: "
            "stationary point set is probably incomplete",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True


@dataclass
class EmergenceEvent:
    lo: float
    hi: float
    count_before: int
    count_after: int
    new_indices: list[int] = field(default_factory=list)
    lost_indices: list[int] = field(default_factory=list)

    @property
    def location(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class ScanResult:
    values: np.ndarray
    points: list[list[StationaryPoint]]
    events: list[EmergenceEvent]
    converged: list[int] = field(default_factory=list)

    @property
    def counts(self) -> list[int]:
        return [len(p) for p in self.points]


def _index_diff(before: Sequence[StationaryPoint], after: Sequence[StationaryPoint]):
    a = sorted(p.index for p in after)
    b = sorted(p.index for p in before)
    new, lost = list(a), []
    for r in b:
        if r in new:
            new.remove(r)
        else:
            lost.append(r)
    return new, lost


def scan_parameter(
    family: Callable[[float], ConstrainedSystem],
    grid: Sequence[float],
    cfg: SolverConfig | None = None,
    resolution: float = 1e-3,
) -> ScanResult:
    """Solve along a parameter grid and bisect every change in the point count."""
    cfg = cfg or SolverConfig()
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    per_value = [solve_stationary(family(float(v)), cfg) for v in grid]
    events = []
    for i in range(len(grid) - 1):
        lo, hi = float(grid[i]), float(grid[i + 1])
        before, after = per_value[i], per_value[i + 1]
        if len(before) == len(after):
            continue
        n_lo, n_hi = len(before), len(after)
        while hi - lo > resolution:
            mid = 0.5 * (lo + hi)
            pts = solve_stationary(family(mid), cfg)
            if len(pts) == n_lo:
                lo, before = mid, pts
            else:
                hi, after = mid, pts
        new, lost = _index_diff(before, after)
        events.append(EmergenceEvent(lo, hi, n_lo, len(after), new, lost))
    return ScanResult(grid, per_value, events, [len(p) for p in per_value])
