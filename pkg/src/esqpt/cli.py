"""Command-line driver.

Subcommands: ``stationary``, ``spectrum``, ``density``, ``hpmap`` and
``verify``.  Options can also come from a flat ``key=value`` file given with
``--config`` (keys are option names with dashes or underscores); explicit
flags override the file.  Exit codes: 0 success, 1 verification failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, atlas, density, quantum, u3
from .solver import SolverConfig, solve_stationary

log = logging.getLogger("esqpt")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
NOT_ECHOED = {"command", "config", "threads", "verbose", "func", "out", "svg"}


class UsageError(Exception):
    """Invalid option values or configuration."""


def parse_grid(text: str) -> np.ndarray:
    """Parse ``a:b:step`` (both ends included when step divides b - a) or a single value."""
    parts = str(text).split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from None
    if len(vals) == 1:
        return np.array(vals)
    if len(vals) != 3:
        raise UsageError(f"grid must be 'a:b:step', got {text!r}")
    a, b, step = vals
    if step <= 0 or b < a:
        raise UsageError(f"grid {text!r} needs step > 0 and b >= a")
    n = int(math.floor((b - a) / step + 1e-9))
    return np.round(a + step * np.arange(n + 1), 12)


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{num}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# ---------------------------------------------------------------------------
# output helpers


def header_lines(args, command: str) -> list[str]:
    lines = [f"# esqpt {__version__}", f"# command={command}"]
    for key in sorted(vars(args)):
        if key not in NOT_ECHOED:
            lines.append(f"# {key}={getattr(args, key)}")
    return lines


def emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 12) + 0.0)
    return str(v)


def _csv_text(header: list[str], columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write("\n".join(header) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# stationary


def _params(xi: float, eps: float) -> u3.U3Params:
    try:
        return u3.U3Params(float(xi), float(eps))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(n_starts=args.n_starts, seed=args.seed, workers=args.threads)


def _point_row(xi, p, method):
    n = u3.occupations(p.point)
    return [xi, p.energy, p.index, p.degenerate, n[0], n[1], n[2],
            float(u3.angular_momentum(p.point)), method, "" if p.chart is None else p.chart]


def _merge_branches(points):
    """Merge the +l and -l solutions: keep one point per (E, r, n0, |l|)."""
    seen, out = set(), []
    for p in sorted(points, key=lambda p: (p.energy, p.index, -float(u3.angular_momentum(p.point)))):
        n = u3.occupations(p.point)
        key = (round(p.energy, 7), p.index, round(float(n[0]), 7), round(abs(float(u3.angular_momentum(p.point))), 7))
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def solve_lagrange(params, args):
    cfg = _solver_cfg(args)
    if args.constraints == "n":
        return solve_stationary(u3.u3_system(params), cfg)
    branches = [1] if args.l == 0 else [1, -1]
    pts = [p for b in branches for p in solve_stationary(u3.u3_system(params, ell=args.l, branch=b), cfg)]
    return _merge_branches(pts)


def cmd_stationary(args) -> int:
    grid = parse_grid(args.xi_grid)
    if np.any((grid < 0) | (grid > 1)):
        raise UsageError("xi values must lie in [0, 1]")
    if args.constraints == "n+l":
        if args.l is None or not 0 <= args.l <= 1:
            raise UsageError("--constraints n+l needs --l in [0, 1]")
        if args.method != "lagrange":
            raise UsageError("the chart atlas handles the single constraint only; use --method lagrange")
    rows, report = [], []
    for xi in grid:
        params = _params(xi, args.eps)
        lag = hp = None
        if args.method in ("lagrange", "both"):
            lag = solve_lagrange(params, args)
            rows += [_point_row(xi, p, "lagrange") for p in lag]
        if args.method in ("hp", "both"):
            hp = atlas.atlas_stationary(params, _solver_cfg(args))
            rows += [_point_row(xi, p, "hp") for p in hp]
        if lag is not None and hp is not None:
            report.append(agreement(float(xi), lag, hp))
    text = _csv_text(header_lines(args, "stationary"),
                     ["xi", "E", "r", "degenerate", "n0", "n1", "n2", "l", "method", "chart"], rows)
    if report:
        text += "".join(f"# agreement {line}\n" for line in report)
        for line in report:
            log.info("agreement %s", line)
    emit(text, args.out)
    return EXIT_OK


def agreement(xi, lag, hp) -> str:
    """Greedy match of (E, r) pairs; reports max |dE| and unmatched counts."""
    a = sorted((p.energy, p.index) for p in lag)
    b = sorted((p.energy, p.index) for p in hp)
    used, dmax, unmatched = set(), 0.0, 0
    for E, r in a:
        cands = [i for i, (E2, r2) in enumerate(b) if r2 == r and i not in used]
        if not cands:
            unmatched += 1
            continue
        i = min(cands, key=lambda i: abs(b[i][0] - E))
        used.add(i)
        dmax = max(dmax, abs(b[i][0] - E))
    unmatched += len(b) - len(used)
    return f"xi={_fmt(xi)} matched={len(used)} unmatched={unmatched} max_abs_dE={dmax:.3e}"


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(args) -> int:
    if args.N < 0 or args.N > args.max_N:
        raise UsageError(f"N must lie in [0, {args.max_N}] (memory cap)")
    params = _params(args.xi, args.eps)
    head = header_lines(args, "spectrum")
    if not args.blocks:
        eigs = quantum.spectrum(params, args.N) if args.N > 0 else np.zeros(1)
        emit(_csv_text(head, ["index", "energy_per_N"], enumerate(eigs)), args.out)
        return EXIT_OK
    if args.eps != 0:
        raise UsageError("--blocks requires --eps 0 (l is conserved only at zero field)")
    if args.out in (None, "-"):
        raise UsageError("--blocks writes one file per block; give --out PREFIX")
    out = Path(args.out)
    for block in quantum.l2_blocks(params, quantum.build_basis(args.N)):
        path = out.with_name(f"{out.stem}_l{block.label:.4f}{out.suffix or '.csv'}")
        rows = ((i, e, block.label) for i, e in enumerate(block.eigenvalues))
        path.write_text(_csv_text(head + [f"# block_m={block.m}"], ["index", "energy_per_N", "l_label"], rows))
        log.info("wrote %s (%d levels)", path, block.dimension)
    return EXIT_OK


# ---------------------------------------------------------------------------
# density


def _delta(args) -> float:
    if args.delta is not None and args.delta2 is not None:
        raise UsageError("give either --delta or --delta2")
    d = args.delta if args.delta is not None else (math.sqrt(args.delta2) if args.delta2 is not None else None)
    if d is None or d <= 0:
        raise UsageError("smoothing width must be positive (use --delta or --delta2)")
    return d


def cmd_density(args) -> int:
    delta = _delta(args)
    grid = parse_grid(args.grid)
    if grid.size < 2:
        raise UsageError("density grid needs at least two points")
    params = _params(args.xi, args.eps)
    if args.l is not None and args.source != "quantum":
        raise UsageError("--l selects a quantum block; use --source quantum")
    if args.source == "quantum":
        if not 0 < args.N <= args.max_N:
            raise UsageError(f"N must lie in [1, {args.max_N}]")
        if args.l is None:
            curve = density.smooth_density(quantum.spectrum(params, args.N), delta, grid, 1.0 / args.N**2)
        else:
            if args.eps != 0:
                raise UsageError("--l requires --eps 0")
            m = int(round(args.l * args.N))
            if not 0 <= args.l <= 1 or abs(m - args.l * args.N) > 1e-9:
                raise UsageError("--l must lie in [0, 1] with l*N an integer")
            blocks = {b.m: b for b in quantum.l2_blocks(params, quantum.build_basis(args.N))}
            curve = density.smooth_density(blocks[m].eigenvalues, delta, grid, 1.0 / args.N)
    else:
        if args.samples < 10**5:
            raise UsageError("--samples must be at least 1e5")
        if args.source == "weyl-chart":
            curve = density.weyl_density_chart(args.chart, params, args.samples, args.seed, grid, delta)
        else:
            curve = density.weyl_density_sphere(params, args.samples, args.seed, grid, delta)
    buf = io.StringIO()
    buf.write("\n".join(header_lines(args, "density")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["E", "rho", "drho_dE", "sigma_rho"])
    for row in zip(curve.E, curve.rho, curve.drho_dE, curve.sigma_rho):
        w.writerow([repr(float(v)) for v in row])
    emit(buf.getvalue(), args.out)
    if args.svg:
        f = 1 if args.l is not None else 2
        lines = [p.energy for p in solve_lagrange(params, _guide_args(args))]
        plot_density(curve, lines, args.svg, f)
    return EXIT_OK


def _guide_args(args):
    ns = argparse.Namespace(**vars(args))
    ns.constraints = "n" if args.l is None else "n+l"
    return ns


def plot_density(curve, guide_energies, path, f: int = 2) -> None:
    """Render the density and its derivative with stationary-energy guide lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    axes[0].plot(curve.E, curve.rho)
    axes[0].set_ylabel("rho")
    axes[1].plot(curve.E, curve.drho_dE)
    axes[1].set_ylabel("d rho / dE")
    axes[1].set_xlabel("E / N")
    for ax in axes:
        for e in guide_energies:
            ax.axvline(e, ls="--", lw=0.6, color="k")
    fig.suptitle(f"{curve.provenance}, delta={curve.delta:.4g}")
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# hpmap


def _vector(text: str, n: int, what: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers") from None
    if v.size != n:
        raise UsageError(f"{what} needs {n} components, got {v.size}")
    return v


def cmd_hpmap(args) -> int:
    if not 0 <= args.chart <= 2 or (args.to is not None and not 0 <= args.to <= 2):
        raise UsageError("charts are numbered 0, 1, 2")
    try:
        if args.mode == "forward":
            res = atlas.hp_forward(args.chart, _vector(args.point, 6, "full point")).coords
        elif args.mode == "inverse":
            res = atlas.hp_inverse(args.chart, _vector(args.point, 4, "chart point"), args.phase)
        else:
            if args.to is None:
                raise UsageError("transition needs --to")
            x = atlas.ChartPoint(args.chart, _vector(args.point, 4, "chart point"))
            res = atlas.hp_transition(args.chart, args.to, x).coords
    except atlas.BoundarySingularity as exc:
        sys.stderr.write(f"esqpt: error: boundary singularity: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(",".join(_fmt(float(v)) for v in res) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    from . import verify

    results = verify.run_suite(args.suite, report=lambda line: print(line, flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esqpt", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key=value file with option defaults")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: ESQPT_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stationary", help="classical stationary points along a xi grid")
    s.add_argument("--xi-grid", required=True, help="a:b:step, inclusive")
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--method", choices=["lagrange", "hp", "both"], default="lagrange")
    s.add_argument("--constraints", choices=["n", "n+l"], default="n")
    s.add_argument("--l", type=float, default=None, help="angular momentum per boson for n+l")
    s.add_argument("--n-starts", type=int, default=SolverConfig.n_starts)
    s.add_argument("--seed", type=int, default=SolverConfig.seed)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_stationary)

    s = sub.add_parser("spectrum", help="exact quantum spectrum per excitation")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--blocks", action="store_true", help="split by angular momentum (eps = 0)")
    s.add_argument("--max-N", type=int, default=quantum.MAX_N)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("density", help="smoothed quantum or Weyl level density")
    s.add_argument("--source", choices=["quantum", "weyl-chart", "weyl-sphere"], default="quantum")
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--N", type=int, default=150)
    s.add_argument("--max-N", type=int, default=quantum.MAX_N)
    s.add_argument("--l", type=float, default=None, help="quantum angular-momentum block (eps = 0)")
    s.add_argument("--delta", type=float, default=None, help="kernel standard deviation")
    s.add_argument("--delta2", type=float, default=None, help="kernel variance")
    s.add_argument("--grid", default="-1:1:0.002")
    s.add_argument("--samples", type=int, default=10**7)
    s.add_argument("--seed", type=int, default=SolverConfig.seed)
    s.add_argument("--chart", type=int, default=0)
    s.add_argument("--n-starts", type=int, default=SolverConfig.n_starts, help="for --svg guide lines")
    s.add_argument("--svg", default=None, help="also write a plot to this path")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("hpmap", help="apply a chart map to one point")
    s.add_argument("mode", choices=["forward", "inverse", "transition"])
    s.add_argument("--chart", type=int, required=True)
    s.add_argument("--to", type=int, default=None)
    s.add_argument("--point", required=True, help="comma-separated coordinates")
    s.add_argument("--phase", type=float, default=0.0)
    s.set_defaults(func=cmd_hpmap)

    s = sub.add_parser("verify", help="run self-check suites")
    s.add_argument("--suite", choices=["core", "atlas", "density", "all"], default="all")
    s.set_defaults(func=cmd_verify)
    return p


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _apply_config(parser, argv, values: dict[str, str]) -> None:
    """Install config values as defaults of the selected subcommand."""
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub_action.choices), None)
    if command is None:
        return
    targets = {"global": parser, "sub": sub_action.choices[command]}
    for key, raw in values.items():
        for prs in targets.values():
            act = next((a for a in prs._actions if a.dest == key), None)
            if act is None:
                continue
            if isinstance(act, argparse._StoreTrueAction):
                low = raw.lower()
                if low not in _BOOL_TRUE | _BOOL_FALSE:
                    raise UsageError(f"config {key}: expected a boolean, got {raw!r}")
                value = low in _BOOL_TRUE
            else:
                try:
                    value = act.type(raw) if act.type else raw
                except (TypeError, ValueError):
                    raise UsageError(f"config {key}: bad value {raw!r}") from None
                if act.choices is not None and value not in act.choices:
                    raise UsageError(f"config {key}: {raw!r} not in {list(act.choices)}")
            act.required = False
            prs.set_defaults(**{key: value})
            break
        else:
            raise UsageError(f"config: unknown key {key!r} for {command}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg_path = None
        for i, a in enumerate(argv):
            if a == "--config" and i + 1 < len(argv):
                cfg_path = argv[i + 1]
            elif a.startswith("--config="):
                cfg_path = a.split("=", 1)[1]
        if cfg_path:
            _apply_config(parser, argv, read_config(cfg_path))
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return EXIT_OK if exc.code == 0 else EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            os.environ["ESQPT_THREADS"] = str(args.threads)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"esqpt: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
