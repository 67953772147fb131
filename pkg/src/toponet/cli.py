"""Command-line entry point.

Every subcommand writes one table (CSV with ``#`` metadata lines, or JSON)
and a ``manifest.json`` next to it.  Exit codes: 0 success, 2 configuration
or usage error, 3 solver non-convergence, 4 numerical inconsistency.

Configuration fields can be overridden through environment variables named
``TOPONET_<FIELD>`` (for example ``TOPONET_NX=24`` or ``TOPONET_R_BM=0.95``);
values are parsed as JSON when possible and as plain strings otherwise.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, NetworkConfig, load_config, validate_mapping
from .drive import boundary_weight, reflection_phase_scan, solve_driven_plane, transmission_scan
from .fluct import bogoliubov_response, is_stable, stability_roots
from .fpcavity import FPParams, fp_input_intensity, fp_slope, fp_solve, fp_stability
from .kerrsteady import ConvergenceError, continuation_sweep, cylinder_circuit, observables, states_at_drive, states_at_total
from .linspec import band_structure, closed_spectrum
from .netmodel import Sector, apply_imperfections, assemble_closed, assemble_plane, kx_grid
from .rootfind import RootFindError

__all__ = ["main", "run", "Table", "ENV_PREFIX"]

ENV_PREFIX = "TOPONET_"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclasses.dataclass
class Table:
    name: str
    columns: list
    rows: list
    meta: dict = dataclasses.field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def write_table(table: Table, out_dir: Path, fmt: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / f"{table.name}.json"
        doc = {"meta": _plain(table.meta), "columns": table.columns, "rows": [[_plain(v) for v in r] for r in table.rows]}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path
    path = out_dir / f"{table.name}.csv"
    lines = [f"# {k}: {json.dumps(_plain(v), sort_keys=True)}" for k, v in table.meta.items()]
    lines.append(",".join(table.columns))
    lines += [",".join(_fmt(v) for v in r) for r in table.rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def parse_range(text: str):
    """``lo:hi:n`` into a linspace."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"range must read lo:hi:n, got {text!r}") from None
    if n < 2 or not hi > lo:
        raise UsageError(f"range needs hi > lo and n >= 2, got {text!r}")
    return np.linspace(lo, hi, n)


def _env_overrides(environ) -> dict:
    fields = {f.name.upper(): f.name for f in dataclasses.fields(NetworkConfig)}
    out = {}
    for key, raw in environ.items():
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX) :] in fields:
            try:
                out[fields[key[len(ENV_PREFIX) :]]] = json.loads(raw)
            except ValueError:
                out[fields[key[len(ENV_PREFIX) :]]] = raw
    return out


def resolve_config(args, environ=None) -> NetworkConfig:
    environ = os.environ if environ is None else environ
    if args.config is None:
        raise ConfigError(["config: --config PATH is required for this subcommand"])
    cfg = load_config(args.config)
    over = _env_overrides(environ)
    if args.seed is not None:
        over["rng_seed"] = args.seed
    if over:
        cfg = validate_mapping({**cfg.to_dict(), **over})
    return cfg


def _workers(threads: int) -> int:
    return os.cpu_count() or 1 if threads == 0 else max(1, threads)


def _sectors(arg):
    return [Sector.PLUS, Sector.MINUS] if arg == "both" else [Sector.parse(int(arg))]


# subcommands ---------------------------------------------------------------


def cmd_spectrum(args, cfg):
    rows = []
    for sec in _sectors(args.sector):
        if cfg.geometry.value == "Plane":
            asm, kx = apply_imperfections(assemble_plane(cfg, sec), cfg), float("nan")
        else:
            asm, kx = apply_imperfections(assemble_closed(cfg, sec, args.kx), cfg), args.kx
        for m in closed_spectrum(asm, cfg.L):
            rows.append([int(sec), kx, m.energy.real, m.energy.imag, m.edge_weight_top, m.edge_weight_bottom])
    return Table("spectrum", ["sector", "kx", "re_E", "im_E", "edge_top", "edge_bottom"], rows, {"geometry": cfg.geometry.value})


def cmd_bands(args, cfg):
    grid = kx_grid(cfg.Nx) if args.kx_points is None else np.linspace(-np.pi, np.pi, args.kx_points, endpoint=False)
    rows, meta = [], {"geometry": cfg.geometry.value}
    for sec in _sectors(args.sector):
        with concurrent.futures.ThreadPoolExecutor(_workers(args.threads)) as ex:
            parts = list(ex.map(lambda k: band_structure(cfg, sec, [k]), grid))
        for k, band in zip(grid, parts):
            for m in band.modes[0]:
                rows.append([int(sec), k, m.energy.real, m.energy.imag, m.edge_weight_top, m.edge_weight_bottom])
    return Table("bands", ["sector", "kx", "re_E", "im_E", "edge_top", "edge_bottom"], rows, meta)


def cmd_drive_cyl(args, cfg):
    grid = parse_range(args.omega_range)
    rows = []
    for sec in _sectors(args.sector):
        scan = reflection_phase_scan(cfg, sec, args.kx, grid)
        for i, w in enumerate(grid):
            rows.append([int(sec), w, scan.A_out[i].real, scan.A_out[i].imag, scan.delta[i], scan.window[i], scan.derivative[i], scan.derivative_exact[i]])
    cols = ["sector", "omega_d", "re_A_out", "im_A_out", "delta", "window", "d_delta", "d_delta_exact"]
    return Table("drive_cyl", cols, rows, {"kx": args.kx, "r_BM": cfg.r_BM})


def cmd_drive_plane(args, cfg):
    grid = parse_range(args.omega_range)
    rows = []
    for sec in _sectors(args.sector):
        scan = transmission_scan(cfg, sec, grid)
        bw = [boundary_weight(solve_driven_plane(cfg, sec, w)) for w in grid] if args.boundary_weight else [float("nan")] * len(grid)
        for i, w in enumerate(grid):
            rows.append([int(sec), w, scan.transmission[i], scan.reflection[i], bw[i]])
    return Table("drive_plane", ["sector", "omega_d", "T", "R", "boundary_weight"], rows, {"r_BM": cfg.r_BM})


def _curve(args, cfg):
    c = cylinder_circuit(cfg, int(args.sector), args.kx)
    chi = abs(cfg.chi) or 1.0
    return continuation_sweep(c, args.omega, (0.01, np.sqrt(args.max_drive / chi)))


def _states(args, cfg):
    curve = _curve(args, cfg)
    if args.np is not None:
        states = states_at_total(curve, args.np)
    elif args.drive is not None:
        states = states_at_drive(curve, args.drive)
    else:
        raise UsageError("give --np (target |chi| N_p) or --drive (|chi| |A_in|^2)")
    if not states:
        raise ConvergenceError("no steady state at the requested intensity within the drive range")
    return states


def _state_opts(p):
    p.add_argument("--omega", type=float, required=True, help="drive frequency omega_d (1/L)")
    p.add_argument("--kx", type=float, default=0.26)
    p.add_argument("--sector", choices=["1", "-1"], default="1")
    p.add_argument("--np", type=float, help="target |chi| N_p")
    p.add_argument("--drive", type=float, help="drive |chi| |A_in|^2")
    p.add_argument("--max-drive", type=float, default=10.0, help="continuation range in |chi| |A_in|^2")


def cmd_steady(args, cfg):
    rows = []
    meta = {"omega_d": args.omega, "kx": args.kx}
    for i, s in enumerate(_states(args, cfg)):
        N, table = observables(s)
        for j, name in enumerate("ruld"):
            for n in range(table.shape[1]):
                rows.append([i, abs(s.A_in) ** 2 * (abs(cfg.chi) or 1.0), (abs(cfg.chi) or 1.0) * N, name, n + 1, table[j, n]])
    return Table("steady", ["state", "drive", "total", "s", "n", "intensity"], rows, meta)


def cmd_sweep(args, cfg):
    curve = _curve(args, cfg)
    stable = [is_stable(s) if args.stability else None for s in curve.states]
    folds = set(curve.folds)
    rows = [
        [curve.drive[i], curve.total[i], int(curve.branch[i]), int(i in folds), "" if stable[i] is None else int(stable[i])]
        for i in range(len(curve.states))
    ]
    meta = {"omega_d": args.omega, "kx": args.kx, "r_BM": cfg.r_BM, "truncated": curve.truncated}
    return Table("sweep", ["drive", "total", "branch_id", "fold_flag", "stable_flag"], rows, meta)


def cmd_stability(args, cfg):
    rows, verdicts = [], []
    states = _states(args, cfg)
    for i, s in enumerate(states):
        if args.state is not None and i != args.state:
            continue
        res = stability_roots(s, p_x=args.px)
        verdicts.append(res.stable)
        rows += [[i, z.real, z.imag] for z in res.roots]
    return Table("stability", ["state", "re_wf", "im_wf"], rows, {"omega_d": args.omega, "stable": verdicts})


def cmd_squeeze(args, cfg):
    s = _states(args, cfg)[args.state]
    grid = parse_range(args.wf_range)
    _, sp = bogoliubov_response(s, args.px, 1.0, 0.0, grid)
    rows = [[w, sp.S_plus[i], sp.S_minus[i], sp.M_IO[i, 0, 0].real, sp.M_IO[i, 0, 0].imag, sp.M_IO[i, 1, 0].real, sp.M_IO[i, 1, 0].imag] for i, w in enumerate(grid)]
    meta = {"omega_d": args.omega, "p_x": args.px, "bosonic_defect": float(np.abs(sp.bosonic_defect).max())}
    return Table("squeeze", ["omega_f", "S_plus", "S_minus", "ReM11", "ImM11", "ReM21", "ImM21"], rows, meta)


def cmd_fp(args, cfg):
    p = FPParams(omega_d=args.omega, r_BM=args.rbm, theta0=args.theta0, chi=args.chi, L=args.length)
    meta = {"omega_d": p.omega_d, "r_BM": p.r_BM, "chi": p.chi}
    if args.drive is not None:
        rows = []
        for s in fp_solve(np.sqrt(args.drive / abs(p.chi)) if p.chi else np.sqrt(args.drive), p):
            st = fp_stability(s, p)[0] if args.stability else ""
            rows.append([s.x, s.y, s.slope, s.A_out.real, s.A_out.imag, st])
        return Table("fp", ["x", "y", "slope", "re_A_out", "im_A_out", "stable"], rows, meta)
    y = parse_range(args.sweep_y)
    x = fp_input_intensity(y, p)
    slope = fp_slope(y, p)
    rows = []
    for yy, xx, sl in zip(y, x, slope):
        st = ""
        if args.stability and xx > 0:
            states = [s for s in fp_solve(np.sqrt(xx / abs(p.chi)), p) if abs(s.y - yy) < 1e-8 * max(1, yy)]
            st = fp_stability(states[0], p)[0] if states else ""
        rows.append([xx, yy, sl, st])
    return Table("fp", ["x", "y", "slope", "stable"], rows, meta)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "bands": cmd_bands,
    "drive-cyl": cmd_drive_cyl,
    "drive-plane": cmd_drive_plane,
    "steady": cmd_steady,
    "sweep": cmd_sweep,
    "stability": cmd_stability,
    "squeeze": cmd_squeeze,
    "fp": cmd_fp,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or TOML network configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--seed", type=int, help="overrides rng_seed of the configuration")
    common.add_argument("--threads", type=int, default=0, help="worker threads for independent sweeps (0 = auto)")

    ap = argparse.ArgumentParser(prog="toponet", description="Linear and Kerr-nonlinear optical fiber networks.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="closed-network spectrum")
    p.add_argument("--kx", type=float, default=0.0)
    p.add_argument("--sector", choices=["1", "-1", "both"], default="both")
    p = sub.add_parser("bands", parents=[common], help="bands over the kx grid")
    p.add_argument("--sector", choices=["1", "-1", "both"], default="both")
    p.add_argument("--kx-points", type=int, help="uniform kx grid instead of the Nx-point grid")
    p = sub.add_parser("drive-cyl", parents=[common], help="reflection phase of the driven cylinder")
    p.add_argument("--kx", type=float, default=0.26)
    p.add_argument("--sector", choices=["1", "-1", "both"], default="1")
    p.add_argument("--omega-range", default="-3.14159:3.14159:2000")
    p = sub.add_parser("drive-plane", parents=[common], help="transmission of the driven plane")
    p.add_argument("--sector", choices=["1", "-1", "both"], default="1")
    p.add_argument("--omega-range", default="-3.14159:3.14159:2000")
    p.add_argument("--boundary-weight", action="store_true", help="also solve for the boundary weight at every frequency")
    for name, helptext in (("steady", "steady states at one intensity"), ("stability", "fluctuation eigenfrequencies"), ("squeeze", "squeezing spectra")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _state_opts(p)
        if name != "steady":
            p.add_argument("--px", type=float, help="probe momentum (default: kx)")
        if name == "squeeze":
            p.add_argument("--wf-range", default="-1.5:1.5:301")
            p.add_argument("--state", type=int, default=0, help="index among the matching states")
        if name == "stability":
            p.add_argument("--state", type=int, help="index among the matching states (default: all)")
    p = sub.add_parser("sweep", parents=[common], help="continuation curve |chi| N_p versus |chi| |A_in|^2")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--kx", type=float, default=0.26)
    p.add_argument("--sector", choices=["1", "-1"], default="1")
    p.add_argument("--max-drive", type=float, default=10.0)
    p.add_argument("--stability", action="store_true", help="classify every curve point (slow)")
    p = sub.add_parser("fp", parents=[common], help="nonlinear Fabry-Perot cavity")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--rbm", type=float, default=0.9)
    p.add_argument("--chi", type=float, default=1.0)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--length", type=float, default=1.0)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sweep-y", help="lo:hi:n grid of y = chi |a_r|^2")
    g.add_argument("--drive", type=float, help="x = chi |A_in|^2; lists every steady state")
    p.add_argument("--stability", action="store_true")
    return ap


RANGE_FLAGS = ("--omega-range", "--wf-range", "--sweep-y")


def _glue_ranges(argv):
    """Attach ``-lo:hi:n`` values to their flag so argparse does not read them as options."""
    out, it = [], iter(argv)
    for a in it:
        if a in RANGE_FLAGS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def run(argv=None, environ=None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = ap.parse_args(_glue_ranges(argv))
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        cfg = None if args.command == "fp" else resolve_config(args, environ)
        table = COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError, OSError) as exc:
        print(f"toponet {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"toponet {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"toponet {args.command}: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (RootFindError, np.linalg.LinAlgError) as exc:
        print(f"toponet {args.command}: numerical inconsistency: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = write_table(table, args.out, args.format)
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "config": None if cfg is None else cfg.to_dict(),
        "seed": None if cfg is None else cfg.rng_seed,
        "outputs": [path.name],
        "version": __version__,
        "wall_time": time.perf_counter() - t0,
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
