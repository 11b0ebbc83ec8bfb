"""Self-checks for the whole package, grouped into suites.

Each check returns a :class:`CheckResult`.  The ``core`` and ``atlas``
suites hold the fast property checks together with the classical
acceptance criteria; the ``density`` suite holds the quantum and density
criteria, several of which diagonalise N = 150 spectra and take minutes.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from . import atlas, density, quantum, u3
from .core import (
    classify_singularity,
    constraint_frame,
    finite_difference_gradient,
    finite_difference_hessian,
    index_info,
    lagrange_gradient,
    lagrange_hessian,
    lagrange_value,
    restricted_hessian,
)
from .solver import SolverConfig, morse_sum, scan_parameter, solve_stationary

log = logging.getLogger(__name__)

# tolerances
FD_STEP = 1e-5
FD_REL_TOL = 1e-6
FD_POINTS = 100
ATLAS_TOL = 1e-10
ATLAS_POINTS = 1000
COMPLETION_TOL = 1e-10
CENTRAL_EPS = 0.3
CENTRAL_LO, CENTRAL_HI, CENTRAL_TOL = 0.023, 0.977, 0.005
EMERGENCE_AT, EMERGENCE_TOL = 0.42, 0.01
EQUIV_ENERGY_TOL = 1e-6
QPT_ZERO, QPT_ORDERED = 1e-6, 0.01
FEATURES_RUN = dict(xi=0.56, eps=0.3, N=150, delta=math.sqrt(0.0075), n_samples=10**7)
BLOCKS_RUN = dict(xi=0.6, eps=0.0, N=150, delta=0.01, ells=(0.2, 0.4, 0.6, 0.8))
INTERIOR_FRACTION = 0.1
WEYL_SIGMAS = 3.0
CLOSED_FORM_N = 100
RANGE_TOL = 1e-9
RANGE_NS = (10, 50, 150)
MORSE_PARAMS = ((0.56, 0.3), (0.8, 0.3))
SEED = SolverConfig().seed


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail, data = fn()
    return CheckResult(name, bool(passed), detail, data, time.perf_counter() - t0)


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


# ---------------------------------------------------------------------------
# property checks


def check_finite_differences(n_points: int = FD_POINTS, seed: int = SEED) -> CheckResult:
    """Analytic gradients/Hessians of H, constraints and L versus central differences."""

    def run():
        rng = np.random.default_rng(seed)
        params = u3.U3Params(0.56, 0.3)
        systems = [u3.u3_system(params), u3.u3_system(params, ell=0.4)]
        worst = 0.0
        for sys in systems:
            fields = [sys.hamiltonian, *sys.constraints]
            for _ in range(n_points):
                X = rng.standard_normal(sys.dim)
                lam = rng.standard_normal(sys.n_constraints)
                for fld in fields:
                    worst = max(worst, _rel_err(fld.gradient(X), finite_difference_gradient(fld.value, X, FD_STEP)))
                    worst = max(worst, _rel_err(fld.hessian(X), finite_difference_hessian(fld.gradient, X, FD_STEP)))
                gL = lagrange_gradient(sys, X, lam)[: sys.dim]
                worst = max(worst, _rel_err(gL, finite_difference_gradient(lambda Y: lagrange_value(sys, Y, lam), X, FD_STEP)))
                hL = lagrange_hessian(sys, X, lam)
                fd = finite_difference_hessian(lambda Y: lagrange_gradient(sys, Y, lam)[: sys.dim], X, FD_STEP)
                worst = max(worst, _rel_err(hL, fd))
        for j in range(3):
            for _ in range(n_points // 3 + 1):
                x = atlas.sample_ball(rng, 1)[0] * 0.95
                g = atlas.reduced_h_gradient(j, params, x)
                worst = max(worst, _rel_err(g, finite_difference_gradient(lambda y: atlas.reduced_h(j, params, y), x, FD_STEP)))
                h = atlas.reduced_h_hessian(j, params, x)
                worst = max(worst, _rel_err(h, finite_difference_hessian(lambda y: atlas.reduced_h_gradient(j, params, y), x, FD_STEP)))
        return worst <= FD_REL_TOL, f"max relative error {worst:.2e} (tol {FD_REL_TOL:g})", {"max_rel": worst}

    return _timed("finite-difference derivatives", run)


def check_completion_invariance(seed: int = SEED) -> CheckResult:
    """Restricted-Hessian spectra agree across random orthonormal completions."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for params, ell in ((u3.U3Params(0.56, 0.3), None), (u3.U3Params(0.6, 0.0), 0.4)):
            sys = u3.u3_system(params, ell=ell)
            pts = solve_stationary(sys, SolverConfig(n_starts=200))
            for p in pts:
                ref = np.linalg.eigvalsh(restricted_hessian(sys, p.point, p.multipliers, constraint_frame(sys, p.point)))
                for _ in range(2):
                    Q, _ = np.linalg.qr(rng.standard_normal((sys.dim, sys.dim)))
                    B = constraint_frame(sys, p.point, completion=Q)
                    ev = np.linalg.eigvalsh(restricted_hessian(sys, p.point, p.multipliers, B))
                    worst = max(worst, float(np.max(np.abs(ev - ref)) / max(1.0, np.abs(ref).max())))
        return worst <= COMPLETION_TOL, f"max relative spectral change {worst:.2e}", {"max_rel": worst}

    return _timed("restricted-Hessian completion invariance", run)


def check_zero_counts_and_morse() -> CheckResult:
    """Exactly c zero eigenvalues at nondegenerate points; Morse sum equals 3."""

    def run():
        sums, bad_zero = {}, 0
        for xi, eps in MORSE_PARAMS:
            sys = u3.u3_system(u3.U3Params(xi, eps))
            pts = solve_stationary(sys)
            bad_zero += sum(1 for p in pts if not p.degenerate and p.zero_count != sys.n_constraints)
            sums[(xi, eps)] = morse_sum(pts)
        ok = bad_zero == 0 and all(s == 3 for s in sums.values())
        txt = ", ".join(f"({xi},{eps}): {s}" for (xi, eps), s in sums.items())
        return ok, f"Morse sums {txt}; points with wrong zero count: {bad_zero}", {"sums": sums}

    return _timed("zero counts and Morse sums", run)


def check_canonicality(n: int = ATLAS_POINTS, seed: int = SEED) -> CheckResult:
    """Chart maps preserve pairwise scalar and symplectic products of the pairs."""

    def run():
        X = u3.sample_sphere(np.random.default_rng(seed), n)
        worst = 0.0
        for j in range(3):
            ok = np.linalg.norm(X[:, [j, 3 + j]], axis=1) > 1e-3
            x = atlas.hp_forward(j, X[ok])
            for k in range(3):
                for l in range(3):
                    if j in (k, l):
                        continue
                    Xk, Xl = X[ok][:, [k, 3 + k]], X[ok][:, [l, 3 + l]]
                    xk, xl = x.pair(k), x.pair(l)
                    dot = np.abs(np.sum(Xk * Xl, 1) - np.sum(xk * xl, 1)).max()
                    sym = np.abs(np.einsum("na,ab,nb->n", Xk, atlas.W, Xl) - np.einsum("na,ab,nb->n", xk, atlas.W, xl)).max()
                    worst = max(worst, dot, sym)
        return worst <= ATLAS_TOL, f"max defect {worst:.2e}", {"max": worst}

    return _timed("chart canonicality witnesses", run)


def check_pullback(n: int = ATLAS_POINTS, seed: int = SEED) -> CheckResult:
    """``reduced_h(j, hp_forward(j, X)) == classical_h(X)`` on the sphere."""

    def run():
        rng = np.random.default_rng(seed)
        X = u3.sample_sphere(rng, n)
        worst = 0.0
        for xi, eps in ((0.56, 0.3), (0.2, -0.7), (1.0, 0.0), (0.0, 1.0)):
            params = u3.U3Params(xi, eps)
            H = u3.classical_h(params, X)
            for j in range(3):
                ok = np.linalg.norm(X[:, [j, 3 + j]], axis=1) > 1e-3
                worst = max(worst, np.abs(atlas.reduced_h(j, params, atlas.hp_forward(j, X[ok])) - H[ok]).max())
        return worst <= ATLAS_TOL, f"max |H^(j) - H| {worst:.2e}", {"max": worst}

    return _timed("pullback identity", run)


def check_transitions(n: int = ATLAS_POINTS, seed: int = SEED) -> CheckResult:
    """Transition maps agree with forward(inverse) and invert each other."""

    def run():
        X = u3.sample_sphere(np.random.default_rng(seed), n)
        norms = np.stack([np.linalg.norm(X[:, [k, 3 + k]], axis=1) for k in range(3)], 1)
        worst = 0.0
        for j in range(3):
            for jp in range(3):
                ok = (norms[:, j] > 1e-3) & (norms[:, jp] > 1e-3)
                x = atlas.hp_forward(j, X[ok])
                y = atlas.hp_transition(j, jp, x)
                direct = atlas.hp_forward(jp, atlas.hp_inverse(j, x, phase=0.7))
                back = atlas.hp_transition(jp, j, y)
                worst = max(worst, np.abs(y.coords - direct.coords).max(), np.abs(back.coords - x.coords).max())
        return worst <= ATLAS_TOL, f"max round-trip defect {worst:.2e}", {"max": worst}

    return _timed("chart transition round trips", run)


# ---------------------------------------------------------------------------
# classical acceptance criteria


def central_point_index(xi: float, eps: float = CENTRAL_EPS):
    """Energy, gradient norm and index of the origin of chart 1."""
    params = u3.U3Params(xi, eps)
    x0 = np.zeros(4)
    info = index_info(atlas.reduced_h_hessian(1, params, x0), 0)
    grad = float(np.linalg.norm(atlas.reduced_h_gradient(1, params, x0)))
    return float(atlas.reduced_h(1, params, x0)), grad, info.index


def check_central_point(step: float = 1e-3) -> CheckResult:
    def run():
        grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
        rows = [central_point_index(xi) for xi in grid]
        e_err = max(abs(E - (1 - xi)) for xi, (E, _, _) in zip(grid, rows))
        g_max = max(g for _, g, _ in rows)
        r = np.array([row[2] for row in rows])
        three = grid[r == 3]
        inside_ok = set(r.tolist()) <= {2, 3} and three.size > 0
        lo, hi = (float(three.min()), float(three.max())) if three.size else (math.nan, math.nan)
        contiguous = three.size and np.all(r[(grid >= lo) & (grid <= hi)] == 3)
        ok = (inside_ok and contiguous and e_err < 1e-12 and g_max < 1e-12
              and abs(lo - CENTRAL_LO) <= CENTRAL_TOL and abs(hi - CENTRAL_HI) <= CENTRAL_TOL)
        return ok, (f"E=1-xi (err {e_err:.1e}); r=3 on [{lo:.3f}, {hi:.3f}], r=2 outside "
                    f"(targets {CENTRAL_LO}, {CENTRAL_HI} +- {CENTRAL_TOL})"), {"lo": lo, "hi": hi}

    return _timed("criterion 1: central chart-1 point", run)


def check_emergence(cfg: SolverConfig | None = None) -> CheckResult:
    def run():
        grid = np.round(np.arange(0.30, 0.551, 0.05), 10)
        res = scan_parameter(lambda xi: u3.u3_system(u3.U3Params(xi, 0.3)), grid, cfg or SolverConfig())
        ups = [e for e in res.events if e.count_after - e.count_before == 2]
        near = [e for e in ups if abs(e.location - EMERGENCE_AT) <= EMERGENCE_TOL]
        txt = "; ".join(f"{e.count_before}->{e.count_after} at {e.location:.4f} (new r={e.new_indices})" for e in res.events)
        return len(near) == 1, f"counts {res.counts}; events: {txt or 'none'}", {"events": res.events}

    return _timed("criterion 2: emergence of two stationary points", run)


def _energy_index_match(a, b, tol):
    a = sorted((p.energy, p.index) for p in a)
    b = sorted((p.energy, p.index) for p in b)
    if len(a) != len(b):
        return False, math.inf
    dE = max((abs(x[0] - y[0]) for x, y in zip(a, b)), default=0.0)
    return all(x[1] == y[1] for x, y in zip(a, b)) and dE <= tol, dE


def check_method_equivalence(cfg: SolverConfig | None = None) -> CheckResult:
    def run():
        cfg_ = cfg or SolverConfig()
        worst, failures = 0.0, []
        for xi in np.round(np.arange(0.05, 0.951, 0.05), 10):
            params = u3.U3Params(float(xi), 0.3)
            lag = solve_stationary(u3.u3_system(params), cfg_)
            hp = atlas.atlas_stationary(params, cfg_)
            ok, dE = _energy_index_match(lag, hp, EQUIV_ENERGY_TOL)
            worst = max(worst, dE)
            if not ok:
                failures.append(float(xi))
        return not failures, f"19 xi values, max |dE| {worst:.1e}; mismatches at {failures or 'none'}", {"max_dE": worst}

    return _timed("criterion 3: Lagrange vs chart atlas", run)


def ground_state_order_parameter(xi: float, cfg: SolverConfig | None = None) -> float:
    """``s = sqrt(2 (n1 + n2))`` at the lowest stationary point (zero field)."""
    pts = solve_stationary(u3.u3_system(u3.U3Params(xi, 0.0)), cfg or SolverConfig(n_starts=500))
    g = min(pts, key=lambda p: p.energy)
    n = u3.occupations(g.point)
    return float(math.sqrt(2 * (n[1] + n[2])))


def check_qpt() -> CheckResult:
    def run():
        below = [0.0, 0.05, 0.1, 0.15, 0.19]
        above = [0.21, 0.25, 0.4, 0.6, 0.8, 1.0]
        s_b = [ground_state_order_parameter(x) for x in below]
        s_a = [ground_state_order_parameter(x) for x in above]
        ok = max(s_b) <= QPT_ZERO and min(s_a) > QPT_ORDERED
        return ok, (f"max s_min for xi<=0.19: {max(s_b):.1e}; min s_min for xi>=0.21: {min(s_a):.3f}"), {}

    return _timed("criterion 4: ground-state transition at xi=1/5", run)


# ---------------------------------------------------------------------------
# quantum and density criteria


def _expected_features(params: u3.U3Params):
    pts = solve_stationary(u3.u3_system(params))
    return [(p.energy, p.index) for p in pts]


def check_density_features(n_samples: int = FEATURES_RUN["n_samples"], seed: int = SEED) -> CheckResult:
    def run():
        params = u3.U3Params(FEATURES_RUN["xi"], FEATURES_RUN["eps"])
        N, delta = FEATURES_RUN["N"], FEATURES_RUN["delta"]
        expected = _expected_features(params)
        eigs = quantum.spectrum(params, N)
        grid = np.round(np.arange(-1.0, 0.8 + 5e-4, 1e-3), 10)
        qc = density.smooth_density(eigs, delta, grid, weight=1.0 / N**2)
        reports = density.locate_singularities(qc, expected, f=2)
        orient = " ".join(f"r{x.index}:{classify_singularity(x.index, 2).orientation}-{x.kind}"
                          f"{'' if x.match else '(MISMATCH)'}" for x in reports)
        weyl = density.weyl_density_chart(0, params, n_samples, seed, grid, delta)
        energies = np.array([e for e, _ in expected])
        dist = np.min(np.abs(grid[:, None] - energies[None, :]), axis=1)
        tol = np.maximum(WEYL_SIGMAS * weyl.sigma_rho, 3.0 / N)
        dev = np.abs(qc.rho - weyl.rho)
        far = dist > 4 * delta
        inside = (grid > eigs.min()) & (grid < eigs.max())
        far_ok = bool(np.all(dev[far] <= tol[far]))
        all_ok = bool(np.all(dev <= tol))
        ok = all(x.match for x in reports) and far_ok
        detail = (f"{len(expected)} stationary points; {orient}; quantum vs Weyl beyond 4*delta: "
                  f"{far_ok} on {int(far.sum())} grid points ({int((far & inside).sum())} inside the spectrum); "
                  f"on all {grid.size} points: {all_ok} (max dev {dev.max():.4f})")
        return ok, detail, {"reports": reports, "far_points": int(far.sum()),
                            "far_inside": int((far & inside).sum()), "all_points_ok": all_ok}

    return _timed("criterion 5: N=150 level-density features at (0.56, 0.3)", run)


def check_block_densities() -> CheckResult:
    def run():
        params = u3.U3Params(BLOCKS_RUN["xi"], BLOCKS_RUN["eps"])
        N, delta = BLOCKS_RUN["N"], BLOCKS_RUN["delta"]
        grid = np.round(np.arange(-0.5, 0.45 + 2.5e-4, 5e-4), 10)
        full = density.smooth_density(quantum.spectrum(params, N), delta, grid, weight=1.0 / N**2)
        jumps = density.locate_singularities(full, [(-0.2, 2), (0.0, 2)], f=2)
        blocks = {b.m: b for b in quantum.l2_blocks(params, quantum.build_basis(N))}
        b0 = density.smooth_density(blocks[0].eigenvalues, delta, grid, weight=1.0 / N)
        peak = density.locate_singularities(b0, [(0.0, 1)], f=1)[0]
        ref_log = abs(peak.amplitude)
        block_txt, blocks_ok = [], True
        for ell in BLOCKS_RUN["ells"]:
            m = int(round(ell * N))
            pts = solve_stationary(u3.u3_system(params, ell=ell), SolverConfig(n_starts=300))
            edges = [(p.energy, p.index) for p in pts]
            curve = density.smooth_density(blocks[m].eigenvalues, delta, grid, weight=1.0 / N)
            scan = density.scan_interior(curve, edges, f=1)
            edge_jump = min(abs(x.amplitude) for x in scan.known)
            quiet = (abs(scan.max_log) < INTERIOR_FRACTION * ref_log
                     and abs(scan.max_jump) < INTERIOR_FRACTION * edge_jump)
            only_extrema = sorted(p.index for p in pts) == [0, 2]
            blocks_ok &= quiet and only_extrema
            block_txt.append(f"l={ell}: log {abs(scan.max_log) / ref_log:.2f}, jump {abs(scan.max_jump) / edge_jump:.2f}")
        top = blocks[N].eigenvalues
        top_ok = bool(np.all(np.abs(top - (1 - 2 * params.xi)) <= 1e-9))
        ok = all(x.match for x in jumps) and peak.match and blocks_ok and top_ok
        detail = (f"down-jumps at -0.2, 0: {[x.match for x in jumps]}; l=0 up-log at 0: {peak.match}; "
                  f"interior amplitudes relative to reference: {'; '.join(block_txt)} (limit {INTERIOR_FRACTION}); "
                  f"l=1 block energies {np.round(top, 12).tolist()}")
        return ok, detail, {"jumps": jumps, "peak": peak, "top": top}

    return _timed("criterion 6: N=150 angular-momentum blocks at (0.6, 0)", run)


def smoothed_linear_density(E, delta: float):
    """``x`` on ``[0, 1]`` (zero elsewhere) convolved with the Gaussian kernel."""
    E = np.asarray(E, dtype=float)
    a, b = -E / delta, (1 - E) / delta
    phi = lambda t: np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
    return E * (ndtr(b) - ndtr(a)) + delta * (phi(a) - phi(b))


def check_closed_form(n_samples: int = 10**6, seed: int = SEED, delta: float = 0.02) -> CheckResult:
    def run():
        params = u3.U3Params(0.0, 0.0)
        grid = np.round(np.arange(0.0, 1.0 + 2.5e-3, 5e-3), 10)
        oracle = smoothed_linear_density(grid, delta)
        z = []
        for curve in (density.weyl_density_chart(0, params, n_samples, seed, grid, delta),
                      density.weyl_density_sphere(params, n_samples, seed, grid, delta)):
            z.append(float(np.max(np.abs(curve.rho - oracle) / curve.sigma_rho)))
        N = CLOSED_FORM_N
        q = density.smooth_density(quantum.spectrum(params, N), delta, grid, weight=1.0 / N**2)
        inner = (grid >= 0.1) & (grid <= 0.9)
        q_dev = float(np.max(np.abs(q.rho[inner] - grid[inner])))
        ok = max(z) <= WEYL_SIGMAS and q_dev <= 2.0 / N
        return ok, (f"Weyl chart/sphere max |dev|/sigma {z[0]:.2f}/{z[1]:.2f} (limit {WEYL_SIGMAS}); "
                    f"quantum N={N} max dev {q_dev:.4f} (limit {2 / N})"), {"z": z, "q_dev": q_dev}

    return _timed("criterion 7: closed-form density at xi=0", run)


def check_spectral_range() -> CheckResult:
    def run():
        mins = {N: quantum.lowest_eigenvalue(u3.U3Params(1.0, 0.0), N) for N in RANGE_NS}
        dev = max(abs(v + 1) for v in mins.values())
        return dev <= RANGE_TOL, f"min eigenvalues {mins} (max |E+1| {dev:.1e})", {"mins": mins}

    return _timed("criterion 8: spectral range at xi=1", run)


def check_kernel_moments() -> CheckResult:
    def run():
        d = 0.07
        m = [quad(lambda x, k=k: x**k * density.gaussian(x, d), -12 * d, 12 * d)[0] for k in range(3)]
        err = max(abs(m[0] - 1), abs(m[1]), abs(m[2] - d * d))
        return err <= 1e-6, f"moment errors {err:.1e}", {}

    return _timed("kernel moments", run)


def check_sphere_vs_chart(n_samples: int = 10**6, seed: int = SEED) -> CheckResult:
    def run():
        params = u3.U3Params(FEATURES_RUN["xi"], FEATURES_RUN["eps"])
        grid = np.round(np.arange(-0.8, 0.6 + 1e-3, 2e-3), 10)
        a = density.weyl_density_chart(0, params, n_samples, seed, grid, FEATURES_RUN["delta"])
        b = density.weyl_density_sphere(params, n_samples, seed + 1, grid, FEATURES_RUN["delta"])
        sig = np.hypot(a.sigma_rho, b.sigma_rho)
        pos = sig > 0
        z = float(np.max(np.abs(a.rho - b.rho)[pos] / sig[pos]))
        ok = z <= WEYL_SIGMAS and np.all(np.abs(a.rho - b.rho)[~pos] == 0)
        return ok, f"max |chart - sphere| / sigma {z:.2f}; integrals {a.integral():.4f}, {b.integral():.4f}", {"z": z}

    return _timed("Weyl density: sphere vs chart", run)


SUITES: dict[str, list[Callable[[], CheckResult]]] = {
    "core": [check_finite_differences, check_completion_invariance, check_zero_counts_and_morse,
             check_central_point, check_qpt, check_emergence],
    "atlas": [check_canonicality, check_pullback, check_transitions, check_method_equivalence],
    "density": [check_kernel_moments, check_closed_form, check_sphere_vs_chart, check_spectral_range,
                check_density_features, check_block_densities],
}
SUITES["all"] = SUITES["core"] + SUITES["atlas"] + SUITES["density"]


def run_suite(name: str, report: Callable[[str], None] = print) -> list[CheckResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for check in SUITES[name]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = check()
        report(res.line())
        results.append(res)
    return results
