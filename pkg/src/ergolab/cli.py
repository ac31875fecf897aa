"""Command-line entry point: ``ergolab <subcommand> --config run.cfg``.

Exit codes: 0 success, 1 computation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ExperimentConfig,
    build_map,
    build_potential,
    get_float,
    get_floats,
    get_int,
    get_ints,
    parse_config,
)
from .dynamics import CircleAngle, CircleTimesD, CylinderPoint, FullShift, IntervalCoord, Quadratic, SymbolWord, Viana, orbit
from .errors import ConfigError, ErgolabError
from .hyperbolic import classify, detect_pliss, random_seeds, record_summary_csv, record_to_csv
from .outputs import OutputSet, resolve_out
from .potentials import orbit_values, verify_bounded
from .pressure import SubAlphabet, WholeSpace, pressure_separated, relative_pressure_shift
from .transfer import ExactBranch, MonteCarlo, build_ulam, grid_for, mme_density, power_iterate

COMMANDS = ("orbit", "hyptimes", "classify", "verify-potential", "birkhoff",
            "pressure-sep", "pressure-shift", "ulam", "mme", "acceptance")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment file with [map], [potential], [run], [output] sections")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed; default 0)")
    p.add_argument("--out", default=None, help="output directory (default: $ERGOLAB_OUT, then output.dir)")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--reproducible", action="store_true", help="strip timestamps from SVG output")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VALUE",
                   help="override one config entry; may be repeated")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ergolab", description="Pressure, hyperbolic times and transfer operators "
                                                 "for expanding and non-uniformly expanding maps.")
    parser.add_argument("--version", action="version", version=f"ergolab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    helps = {
        "orbit": "iterate one point and write its orbit",
        "hyptimes": "Pliss hyperbolic times along one orbit",
        "classify": "H / H^c labels for a random seed ensemble",
        "verify-potential": "bounded Birkhoff sums over random orbits",
        "birkhoff": "Birkhoff sums along one orbit",
        "pressure-sep": "pressure from (n, eps)-separated sets",
        "pressure-shift": "cylinder-cover pressure on a full shift",
        "ulam": "leading eigenvalue of the Ulam transfer matrix",
        "mme": "maximal-entropy density from the Ulam matrix",
        "acceptance": "run every acceptance check and print a pass/fail table",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p)
        if name == "acceptance":
            p.add_argument("--only", default=None, help="comma-separated criterion numbers")
            p.add_argument("--no-rerun", action="store_true", help="skip the determinism re-run")
    return parser


# ---------------------------------------------------------------------------
# helpers

def _start_point(system, run: dict):
    if isinstance(system, CircleTimesD):
        return CircleAngle(get_float(run, "theta0", 0.1))
    if isinstance(system, Quadratic):
        return IntervalCoord(get_float(run, "x0", 0.0))
    if isinstance(system, Viana):
        return CylinderPoint(get_float(run, "theta0", 0.1), get_float(run, "x0", 0.0))
    if isinstance(system, FullShift):
        if "word" not in run:
            raise ConfigError("missing required key 'word' in [run]")
        try:
            return SymbolWord.parse(system.k, run["word"])
        except ErgolabError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"no start point for {system.kind}")


def _rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _want_svg(cfg: ExperimentConfig) -> bool:
    return cfg.output.get("svg", "true").lower() not in ("false", "0", "no", "off")


def _lambda(run: dict):
    sub = run.get("sub_alphabet")
    if not sub:
        return WholeSpace()
    try:
        return SubAlphabet(frozenset(int(ch) for ch in sub if ch not in ", "))
    except ValueError:
        raise ConfigError(f"sub_alphabet must list digits, got {sub!r}") from None


def _mode(run: dict, seed: int):
    mode = run.get("mode", "exact")
    if mode == "exact":
        return ExactBranch()
    if mode == "monte_carlo":
        return MonteCarlo(seed, get_int(run, "samples_per_cell", 64))
    raise ConfigError(f"unknown Ulam mode {mode!r}")


def _grid(system, run):
    m = get_int(run, "m", name=" in [run]")
    m_x = get_int(run, "m_x", m) if isinstance(system, Viana) else None
    return grid_for(system, m, m_x)


# ---------------------------------------------------------------------------
# subcommands; each returns an exit code

def cmd_orbit(cfg, seed, out):
    system = build_map(cfg.map)
    orb = orbit(system, _start_point(system, cfg.run), get_int(cfg.run, "n", name=" in [run]"))
    out.csv("orbit.csv", orb.to_csv)
    if _want_svg(cfg) and not isinstance(system, FullShift):
        pts = np.asarray(orb.points)

        def draw(ax):
            ys = pts[:, 1] if pts.ndim == 2 else pts
            ax.plot(np.arange(len(ys)), ys, ".-", lw=0.6)
            ax.set_xlabel("step")
            ax.set_ylabel("x" if pts.ndim == 2 or isinstance(system, Quadratic) else "theta")
            ax.set_title(system.id, fontsize=8)

        out.svg("orbit.svg", draw)
    print(f"orbit of {system.id}: {orb.n} steps")
    return 0


def cmd_hyptimes(cfg, seed, out):
    system = build_map(cfg.map)
    n = get_int(cfg.run, "n", name=" in [run]")
    sigma = get_float(cfg.run, "sigma", 0.5)
    rec = detect_pliss(orbit(system, _start_point(system, cfg.run), n), sigma)
    out.csv("hyperbolic_times.csv", lambda fh: record_to_csv(rec, fh))
    out.csv("hyperbolic_summary.csv", lambda fh: record_summary_csv(rec, fh))
    if _want_svg(cfg) and rec.length > 0:
        freq = rec.freq_table()

        def draw(ax):
            ax.plot(np.arange(1, rec.length + 1), freq, lw=0.8)
            ax.set_xlabel("n")
            ax.set_ylabel("frequency of hyperbolic times")
            ax.set_ylim(0, 1.05)

        out.svg("frequency.svg", draw)
    msg = f"{len(rec.times)} hyperbolic times in 1..{rec.length} (sigma={sigma})"
    if rec.truncated:
        msg += f"; orbit truncated at {rec.truncated_at} (critical hit)"
    print(msg)
    return 0


def cmd_classify(cfg, seed, out):
    system = build_map(cfg.map)
    run = cfg.run
    seeds = random_seeds(system, get_int(run, "seeds", 500), seed)
    cls = classify(system, seeds, get_float(run, "sigma", 0.9), get_int(run, "horizon", 5000),
                   get_float(run, "threshold", 0.05))
    out.csv("classification.csv", cls.to_csv)
    if _want_svg(cfg):
        def draw(ax):
            f = cls.freqs[~cls.flagged]
            ax.hist(f, bins=40)
            ax.axvline(cls.threshold, color="k", lw=0.8)
            ax.set_xlabel("hyperbolic-time frequency")

        out.svg("classification.svg", draw)
    print(f"fraction H = {cls.fraction_h:.6f} over {len(cls.freqs) - int(cls.flagged.sum())} seeds "
          f"({int(cls.flagged.sum())} flagged)")
    return 0


def cmd_verify_potential(cfg, seed, out):
    system = build_map(cfg.map)
    phi = build_potential(cfg.potential, system)
    rep = verify_bounded(phi, system, get_int(cfg.run, "seeds", 1000), get_int(cfg.run, "n", 100_000), seed,
                         get_float(cfg.run, "tol", 1e-9))
    out.csv("birkhoff_report.csv", rep.to_csv)
    print("{")
    print(f"  potential: {rep.potential_id}")
    print(f"  map: {rep.map_id}")
    print(f"  seeds: {len(rep.max_abs)}, horizon: {rep.horizon}, excluded: {rep.excluded}")
    print(f"  global_max_abs_Sn: {rep.global_max!r}")
    print(f"  bound: {rep.bound!r}")
    print("}")
    if rep.passed is None:
        print("NO BOUND (potential carries no a priori bound)")
        return 0
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


def cmd_birkhoff(cfg, seed, out):
    system = build_map(cfg.map)
    phi = build_potential(cfg.potential, system)
    n = get_int(cfg.run, "n", name=" in [run]")
    orb = orbit(system, _start_point(system, cfg.run), n)
    vals = orbit_values(phi, orb, n)
    sums = np.cumsum(vals)
    out.csv("birkhoff.csv", lambda fh: _rows(fh, ["n", "phi", "S_n"],
                                             ((i + 1, vals[i], sums[i]) for i in range(n))))
    if _want_svg(cfg):
        def draw(ax):
            ax.plot(np.arange(1, n + 1), sums, lw=0.8)
            ax.set_xlabel("n")
            ax.set_ylabel("S_n phi")

        out.svg("birkhoff.svg", draw)
    print(f"S_{n} phi = {float(sums[-1])!r}")
    return 0


def cmd_pressure_sep(cfg, seed, out):
    system = build_map(cfg.map)
    phi = build_potential(cfg.potential, system)
    run = cfg.run
    est = pressure_separated(system, phi, get_ints(run, "n_list", [4, 5, 6]), get_floats(run, "eps_list", [1e-3]),
                             get_int(run, "resolution", 2 ** 16))
    out.csv("pressure_separated.csv", est.to_csv)
    print(f"P(phi) ~ {est.value!r}  [{est.note}]")
    return 0


def cmd_pressure_shift(cfg, seed, out):
    system = build_map(cfg.map)
    if not isinstance(system, FullShift):
        raise ConfigError("pressure-shift needs kind = full_shift in [map]")
    phi = build_potential(cfg.potential, system)
    run = cfg.run
    est = relative_pressure_shift(system.k, phi, _lambda(run), get_int(run, "N", 1), get_int(run, "n_max", 24),
                                  get_float(run, "gamma_tol", 1e-6))
    out.csv("pressure_shift.csv", est.to_csv)
    print(f"gamma* = {est.value!r}")
    return 0


def cmd_ulam(cfg, seed, out):
    system = build_map(cfg.map)
    phi = build_potential(cfg.potential, system) if cfg.potential else None
    run = cfg.run
    grid = _grid(system, run)
    op = build_ulam(system, grid, phi, _mode(run, seed))
    res = power_iterate(op, get_float(run, "tol", 1e-13), get_int(run, "max_iter", 10000))
    out.csv("ulam.csv", lambda fh: _rows(
        fh, ["cells", "eigenvalue", "log_eigenvalue", "residual", "iterations", "converged"],
        [(grid.size, res.eigenvalue, math.log(res.eigenvalue), res.residual, res.iterations, int(res.converged))]))
    if run.get("triplets", "false").lower() in ("true", "1", "yes"):
        out.text("ulam_triplets.txt", op.to_triplets)
    print(f"lambda = {res.eigenvalue!r}  (log lambda = {math.log(res.eigenvalue)!r})")
    if not res.converged:
        print("warning: power iteration did not reach the tolerance", file=sys.stderr)
    return 0


def cmd_mme(cfg, seed, out):
    system = build_map(cfg.map)
    run = cfg.run
    grid = _grid(system, run)
    dens = mme_density(system, grid, _mode(run, seed), get_float(run, "tol", 1e-13), get_int(run, "max_iter", 10000))
    out.csv("mme_density.csv", dens.to_csv)
    if _want_svg(cfg):
        def draw(ax):
            if dens.centers.ndim == 1:
                ax.step(dens.centers, dens.density, where="mid", lw=0.8)
                ax.set_xlabel("cell center")
                ax.set_ylabel("density")
            else:
                img = dens.density.reshape(grid.m_theta, grid.m_x).T
                ax.imshow(img, origin="lower", aspect="auto", extent=(0, 1, grid.lo_x, grid.hi_x))
                ax.set_xlabel("theta")
                ax.set_ylabel("x")

        out.svg("mme_density.svg", draw)
    print(f"mass = {dens.mass!r}, lambda = {dens.eigenvalue!r}")
    return 0


def cmd_acceptance(cfg, seed, out, only=None, rerun=True):
    from . import acceptance as acc

    numbers = sorted(only) if only else sorted(acc.CRITERIA)
    results = []
    for n in numbers:
        res = acc.CRITERIA[n](seed)
        out.csv(acc.csv_name(n), lambda fh, r=res: acc.write_rows(fh, r.rows))
        print(res.line(), flush=True)
        results.append(res)
    if rerun:
        res = acc.criterion_11(seed, out.dir, numbers)
        print(res.line(), flush=True)
        results.append(res)
    out.csv("acceptance_summary.csv", lambda fh: _rows(
        fh, ["criterion", "title", "passed", "detail"],
        [(r.number, r.title, int(r.passed), r.detail) for r in results]))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


HANDLERS = {
    "orbit": cmd_orbit, "hyptimes": cmd_hyptimes, "classify": cmd_classify,
    "verify-potential": cmd_verify_potential, "birkhoff": cmd_birkhoff, "pressure-sep": cmd_pressure_sep,
    "pressure-shift": cmd_pressure_shift, "ulam": cmd_ulam, "mme": cmd_mme,
}


def _load(args) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
    else:
        cfg = ExperimentConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, val = item.split("=", 1)
        cfg.set(key.strip(), val)
    if cfg.map:
        build_map(cfg.map)
    if cfg.operation is not None and cfg.operation != args.command:
        raise ConfigError(f"config names operation {cfg.operation!r} but subcommand is {args.command!r}")
    return cfg


def _threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        only = None
        if args.command == "acceptance" and args.only:
            try:
                only = {int(v) for v in args.only.split(",") if v.strip()}
            except ValueError:
                raise UsageError("--only takes comma-separated integers") from None
            from .acceptance import CRITERIA

            unknown = sorted(only - set(CRITERIA))
            if unknown:
                raise UsageError(f"unknown criteria {unknown}")
        cfg = _load(args)
        _threads(args.threads)
    except UsageError as exc:
        print(f"ergolab: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"ergolab: config error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else get_int(cfg.run, "seed", 0)
    cfg.run["seed"] = str(seed)
    out = OutputSet(resolve_out(args.out, cfg.output.get("dir")), cfg.hash(), args.reproducible)
    try:
        if args.command == "acceptance":
            code = cmd_acceptance(cfg, seed, out, only, not args.no_rerun)
        else:
            if not cfg.map:
                raise ConfigError("missing [map] section (use --config or --set map.kind=...)")
            code = HANDLERS[args.command](cfg, seed, out)
        out.manifest()
        return code
    except ConfigError as exc:
        out.discard()
        print(f"ergolab: config error: {exc}", file=sys.stderr)
        return 2
    except (ErgolabError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out.discard()
        print(f"ergolab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
