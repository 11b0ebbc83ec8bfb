"""Smoothed level densities, semiclassical Weyl densities and singularity fits.

All densities are Gaussian-smoothed: ``rho(E) = sum_n w G(E - E_n)`` with
``G`` of standard deviation ``delta``.  Derivatives use the analytic kernel
derivative.  Weyl densities are Monte Carlo estimates: sampled energies are
binned on a grid much finer than ``delta`` and the histogram is convolved
with the kernel, which also yields the per-point statistical error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import dawsn, ndtr

from .atlas import reduced_h, sample_ball
from .core import classify_singularity
from .u3 import U3Params, classical_h, sample_sphere

SHARD_SIZE = 500_000
BIN_FRACTION = 50  # histogram bins per kernel width


@dataclass
class DensityCurve:
    """Smoothed density on an energy grid.

    ``sigma_rho`` and ``sigma_drho`` are one-standard-deviation Monte Carlo
    errors (zero for quantum curves).  ``normalization`` is the total weight
    the curve integrates to.
    """

    E: np.ndarray
    rho: np.ndarray
    drho_dE: np.ndarray
    normalization: float
    provenance: str
    delta: float
    sigma_rho: np.ndarray | None = None
    sigma_drho: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float)
        if self.E.ndim != 1 or np.any(np.diff(self.E) <= 0):
            raise ValueError("energy grid must be strictly increasing")
        if self.sigma_rho is None:
            self.sigma_rho = np.zeros_like(self.E)
        if self.sigma_drho is None:
            self.sigma_drho = np.zeros_like(self.E)

    def integral(self) -> float:
        return float(np.trapezoid(self.rho, self.E))

    def write_csv(self, path, meta: dict | None = None) -> None:
        header = {"provenance": self.provenance, "delta": self.delta,
                  "normalization": self.normalization, **self.meta, **(meta or {})}
        with Path(path).open("w", newline="") as fh:
            for key, value in header.items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["E", "rho", "drho_dE", "sigma_rho"])
            for row in zip(self.E, self.rho, self.drho_dE, self.sigma_rho):
                writer.writerow([repr(float(v)) for v in row])


def read_density_csv(path) -> DensityCurve:
    meta, rows = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            else:
                rows.append(line)
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return DensityCurve(
        data[:, 0], data[:, 1], data[:, 2],
        normalization=float(meta.pop("normalization")),
        provenance=meta.pop("provenance"),
        delta=float(meta.pop("delta")),
        sigma_rho=data[:, 3],
        meta=meta,
    )


def gaussian(x, delta: float):
    return np.exp(-0.5 * (x / delta) ** 2) / (math.sqrt(2 * math.pi) * delta)


def gaussian_derivative(x, delta: float):
    return -x / delta**2 * gaussian(x, delta)


def _convolve(centres, weights, grid, delta, chunk: int = 2048):
    """``sum_i w_i K(E - c_i)`` for K in (G, G', G^2, G'^2), chunked over the grid."""
    out = np.zeros((4, len(grid)))
    for start in range(0, len(grid), chunk):
        x = grid[start:start + chunk, None] - centres[None, :]
        g = gaussian(x, delta)
        dg = -x / delta**2 * g
        out[0, start:start + chunk] = g @ weights
        out[1, start:start + chunk] = dg @ weights
        out[2, start:start + chunk] = (g * g) @ weights
        out[3, start:start + chunk] = (dg * dg) @ weights
    return out


def smooth_density(eigs, delta: float, grid, weight: float = 1.0) -> DensityCurve:
    """Gaussian-smoothed density of a discrete spectrum.

    Each level carries ``weight``; pass ``weight = 1 / N**f`` to compare a
    spectrum in per-excitation units with the semiclassical density.
    """
    eigs = np.asarray(eigs, dtype=float).ravel()
    if eigs.size == 0:
        raise ValueError("empty spectrum")
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = np.asarray(grid, dtype=float)
    # only levels within reach of the grid contribute
    near = (eigs > grid[0] - 12 * delta) & (eigs < grid[-1] + 12 * delta)
    res = _convolve(eigs[near], np.full(near.sum(), weight), grid, delta)
    return DensityCurve(grid, res[0], res[1], weight * eigs.size, "quantum", delta)


# ---------------------------------------------------------------------------
# Monte Carlo Weyl densities


def _histogram_density(sampler: Callable, n_samples: int, seed: int, grid, delta: float,
                       prefactor: float, provenance: str) -> DensityCurve:
    """Kernel-smoothed pdf of sampled energies times ``prefactor``.

    ``sampler(rng, n)`` returns ``n`` energies.  Samples are drawn in fixed
    shards with seeds ``(seed, shard)``, so results do not depend on how
    shards are scheduled.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    grid = np.asarray(grid, dtype=float)
    h = delta / BIN_FRACTION
    lo, hi = grid[0] - 10 * delta, grid[-1] + 10 * delta
    nbins = int(math.ceil((hi - lo) / h))
    edges = lo + h * np.arange(nbins + 1)
    counts = np.zeros(nbins, dtype=np.int64)
    n_shards = -(-n_samples // SHARD_SIZE)
    for shard in range(n_shards):
        n = min(SHARD_SIZE, n_samples - shard * SHARD_SIZE)
        rng = np.random.default_rng([seed, shard])
        counts += np.histogram(sampler(rng, n), bins=edges)[0]
    centres = 0.5 * (edges[:-1] + edges[1:])
    keep = counts > 0
    res = _convolve(centres[keep], counts[keep] / n_samples, grid, delta)
    m1, d1, m2, d2 = res
    var = np.maximum(m2 - m1**2, 0.0) / n_samples
    dvar = np.maximum(d2 - d1**2, 0.0) / n_samples
    return DensityCurve(
        grid,
        prefactor * m1,
        prefactor * d1,
        normalization=prefactor,
        provenance=provenance,
        delta=delta,
        sigma_rho=prefactor * np.sqrt(var),
        sigma_drho=prefactor * np.sqrt(dvar),
        meta={"n_samples": n_samples, "seed": seed},
    )


def weyl_prefactor(f: int) -> float:
    """``Vol(B_2f(sqrt 2)) / (2 pi)^f = 1 / f!``."""
    return 1.0 / math.factorial(f)


def weyl_density_chart(j: int, params: U3Params, n_samples: int, seed: int, grid,
                       delta: float, f: int = 2) -> DensityCurve:
    """Weyl density from uniform samples of the chart ball and ``H^(j)``."""
    curve = _histogram_density(
        lambda rng, n: reduced_h(j, params, sample_ball(rng, n, f)),
        n_samples, seed, grid, delta, weyl_prefactor(f), "weyl-chart",
    )
    curve.meta["chart"] = j
    return curve


def weyl_density_sphere(params: U3Params, n_samples: int, seed: int, grid,
                        delta: float, f: int = 2) -> DensityCurve:
    """Weyl density from uniform samples of the fixed-N sphere and the full H.

    The sphere measure pushed forward to any chart is uniform on the ball,
    so this has the same normalization as :func:`weyl_density_chart`.
    """
    return _histogram_density(
        lambda rng, n: classical_h(params, sample_sphere(rng, n)),
        n_samples, seed, grid, delta, weyl_prefactor(f), "weyl-sphere",
    )


# ---------------------------------------------------------------------------
# Singularity shapes and fits

_EULER_GAMMA = 0.5772156649015329
_U_MAX = 40.0
_U = np.linspace(0.0, _U_MAX, 40001)
_LOG_TABLE = -0.5 * (_EULER_GAMMA + math.log(2.0)) + cumulative_simpson(
    math.sqrt(2.0) * dawsn(_U / math.sqrt(2.0)), x=_U, initial=0.0
)


def smoothed_log(x, delta: float):
    """``E[ln|x + delta Z|]`` for standard normal Z: a Gaussian-smoothed ``ln|x|``."""
    u = np.abs(np.asarray(x, dtype=float)) / delta
    inner = np.interp(np.minimum(u, _U_MAX), _U, _LOG_TABLE)
    big = np.maximum(u, _U_MAX)
    outer = np.log(big) - 0.5 / big**2 - 0.75 / big**4
    return math.log(delta) + np.where(u <= _U_MAX, inner, outer)


def smoothed_step(x, delta: float):
    """Gaussian-smoothed Heaviside step."""
    return ndtr(np.asarray(x, dtype=float) / delta)


@dataclass(frozen=True)
class FeatureReport:
    energy: float
    index: int
    kind: str
    expected_sign: int
    amplitude: float
    stderr: float
    measured_sign: int
    significant: bool
    match: bool


def _shape(kind: str, x, delta):
    return smoothed_step(x, delta) if kind == "jump" else smoothed_log(x, delta)


def locate_singularities(
    curve: DensityCurve,
    expected: Sequence[tuple[float, int]],
    f: int = 2,
    window: float = 4.0,
    background_degree: int = 2,
    merge_tol: float = 1e-6,
    significance: float = 3.0,
) -> list[FeatureReport]:
    """Measure the singular feature at each expected stationary energy.

    The relevant curve is the ``(f-1)``-th derivative of the density.  Around
    every expected energy a window of half-width ``window * delta`` is fitted
    by linear least squares with a polynomial background plus one smoothed
    singular shape (step for even index, ``ln|E - E_st|`` for odd index) for
    each expected energy within reach of the window; coincident energies of
    equal index share one shape.  The sign of the shape coefficient gives
    the measured orientation, compared against :func:`classify_singularity`;
    a match also requires the coefficient to exceed ``significance`` times
    its least-squares standard error.
    """
    if f - 1 == 0:
        y = curve.rho
    elif f - 1 == 1:
        y = curve.drho_dE
    else:
        raise ValueError("only the density and its first derivative are available")
    delta = curve.delta
    feats: list[tuple[float, int]] = []
    for E0, r in sorted(expected):
        if not any(abs(E0 - e) <= merge_tol and r == q for e, q in feats):
            feats.append((float(E0), int(r)))
    reports = []
    half = window * delta
    for E0, r in feats:
        sel = np.abs(curve.E - E0) <= half
        x = curve.E[sel]
        if x.size < background_degree + 3:
            raise ValueError(f"grid too coarse around E={E0}")
        t = (x - E0) / half
        cols = [t**k for k in range(background_degree + 1)]
        target = None
        for E1, r1 in feats:
            if abs(E1 - E0) <= half + 3 * delta:
                kind = classify_singularity(r1, f).kind
                if E1 == E0 and r1 == r:
                    target = len(cols)
                cols.append(_shape(kind, x - E1, delta))
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, y[sel], rcond=None)
        resid = y[sel] - A @ coef
        dof = max(x.size - A.shape[1], 1)
        cov = np.linalg.pinv(A.T @ A) * (resid @ resid) / dof
        amp = float(coef[target])
        st = classify_singularity(r, f)
        want = st.sign
        err = float(math.sqrt(max(cov[target, target], 0.0)))
        got = int(np.sign(amp))
        significant = abs(amp) > significance * err
        reports.append(FeatureReport(E0, r, st.kind, want, amp, err, got, significant, significant and got == want))
    return reports


@dataclass(frozen=True)
class InteriorScan:
    """Largest singular-shape amplitudes fitted away from the known features."""

    max_log: float
    at_log: float
    max_jump: float
    at_jump: float
    known: list[FeatureReport]


def scan_interior(curve: DensityCurve, known: Sequence[tuple[float, int]], f: int = 2,
                  window: float = 4.0, step: float | None = None) -> InteriorScan:
    """Probe for unexpected singular features between the known ones.

    A trial log feature and a trial jump are placed at every grid position
    (spacing ``step``, default ``delta / 2``) farther than ``window * delta``
    from all ``known`` energies and inside their range; each trial is fitted
    jointly with the known features by :func:`locate_singularities`.  The
    largest trial amplitudes measure how featureless the interior is, to be
    compared with the amplitudes of genuine features.
    """
    energies = np.array([e for e, _ in known], dtype=float)
    step = step or curve.delta / 2
    half = window * curve.delta
    cand = np.arange(energies.min() + half, energies.max() - half + 1e-12, step)
    cand = cand[np.min(np.abs(cand[:, None] - energies[None, :]), axis=1) > half]
    best = {1: (0.0, math.nan), 0: (0.0, math.nan)}
    for E0 in cand:
        for r in (1, 0):
            reps = locate_singularities(curve, list(known) + [(E0, r)], f=f, window=window)
            amp = next(x.amplitude for x in reps if x.energy == E0 and x.index == r)
            if abs(amp) > abs(best[r][0]):
                best[r] = (amp, float(E0))
    known_reports = locate_singularities(curve, known, f=f, window=window)
    return InteriorScan(best[1][0], best[1][1], best[0][0], best[0][1], known_reports)
