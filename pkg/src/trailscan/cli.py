"""Command line entry point: ``trailscan {theory,power,mu95,verify}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata

from . import analysis, families
from .config import ExperimentConfig, format_config, load_config, require_grid
from .detectors import was_lambda, was_mu95
from .engine import ANALYTIC_DETECTORS, mu95_search, path_source, power_curve
from .errors import ConfigError, SearchError
from .graph import LayeredDag, build_graph
from .svg import power_svg
from .verify import run_checks

POWER_COLUMNS = ("detector", "graph", "m", "mu", "theta", "power", "se", "n_trials", "threshold",
                 "alpha_hat", "master_seed")
MU95_COLUMNS = ("detector", "graph", "m", "mu95", "lo", "hi", "power_lo", "power_hi", "evaluations",
                "status", "message")
DEFAULT_WAS_M = (1025, 2049, 4097, 8193, 16385, 32769)


class UsageError(Exception):
    pass


def version_string() -> str:
    try:
        v = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        v = "0+unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=os.path.dirname(__file__), timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            v += "+g" + rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return v


@dataclass
class RunManifest:
    command: str
    config: str
    version: str
    master_seed: int
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)


def _num(v) -> str:
    # repr of a float is locale independent and round-trips
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(r[c]) for c in columns])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _setup(args, require_power_grid=False):
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    if require_power_grid:
        require_grid(cfg, args.config)
    os.makedirs(args.out, exist_ok=True)
    return cfg


def _source(cfg: ExperimentConfig, g):
    return path_source(g, prior=cfg.prior_spec(g.m) if cfg.path is None else None, path=cfg.path_value())


def _graph(cfg: ExperimentConfig, m: int, detector: str = ""):
    if detector in ANALYTIC_DETECTORS:
        return LayeredDag(cfg.graph, m)  # field-free shortcuts read only the shape, so skip the node cap
    return build_graph(cfg.graph, m, cfg.d if cfg.graph == "lattice_hd" else None)


def _finish(args, manifest: RunManifest, t0: float) -> None:
    manifest.wall_time = time.perf_counter() - t0
    path = os.path.join(args.out, "manifest.json")
    manifest.outputs.append(path)
    _write_json(path, asdict(manifest))


# -- subcommands -------------------------------------------------------------


def cmd_theory(args) -> int:
    names = [args.family] if args.family else list(families.FAMILIES)
    for n in names:
        if n not in families.FAMILIES:
            raise UsageError(f"unknown family {n!r}; expected one of {tuple(families.FAMILIES)}")
    ms = _int_list(args.was_mu95) if args.was_mu95 else DEFAULT_WAS_M
    report = {"families": {}, "was_mu95": {}, "tree_glrt_type1_bound": {}}
    for n in names:
        fam = families.FAMILIES[n]
        ts = families.theta_star(fam)
        entry = {"theta_star": None if ts.unbounded else ts.value}
        if not ts.unbounded:
            entry["f_theta_star"] = families.f_rate(fam, ts.value)
            entry["mean_shift"] = families.mean_shift(fam, ts.value)
        grid = [t for t in (0.1, 0.2, 0.3, 0.4, 0.5) if fam.in_domain(2 * t)]
        entry["lambda"] = {repr(t): families.lambda_ratio(fam, t) for t in grid}
        report["families"][n] = entry
    for m in ms:
        report["was_mu95"][str(m)] = {"lambda_m": was_lambda(m), "mu95": was_mu95(m, args.alpha)}
    for m in (_int_list(args.tree_m) if args.tree_m else (16,)):
        report["tree_glrt_type1_bound"][str(m)] = analysis.tree_glrt_type1_bound(m)

    if args.format == "json":
        print(json.dumps(report, indent=2))
        return 0
    for n, e in report["families"].items():
        print(f"[{n}]")
        if e["theta_star"] is None:
            print("  theta*      unbounded (f decreases over the whole search interval)")
        else:
            print(f"  theta*      {e['theta_star']:.6f}")
            print(f"  f(theta*)   {e['f_theta_star']:.6f}")
            print(f"  mean shift  {e['mean_shift']:.6f}")
        for t, lam in e["lambda"].items():
            print(f"  lambda({t}) = {lam:.6f}")
    print(f"[WAS mu_0.95, alpha={args.alpha}]")
    for m, e in report["was_mu95"].items():
        print(f"  m={m:>6}  lambda_m={e['lambda_m']:.6f}  mu95={e['mu95']:.4f}")
    print("[tree GLRT type I bound]")
    for m, v in report["tree_glrt_type1_bound"].items():
        print(f"  m={m:>4}  {v:.5f}")
    return 0


def cmd_power(args) -> int:
    t0 = time.perf_counter()
    cfg = _setup(args, require_power_grid=True)
    manifest = RunManifest("power", format_config(cfg), version_string(), cfg.seed)
    fam = families.get_family(cfg.family)
    rows, series = [], []
    for det in cfg.detector:
        n_cal, n_pow = cfg.trials(det)
        for m in cfg.m:
            g = _graph(cfg, m, det)
            curve = power_curve(det, g, fam, cfg.mu_grid or None, _source(cfg, g), cfg.alpha, n_cal, n_pow,
                                cfg.seed, args.threads, thetas=cfg.theta_grid or None, B=cfg.B)
            for p in curve.points:
                rows.append(dict(detector=det, graph=cfg.graph, m=m, mu=float(p.mu), theta=float(p.theta),
                                 power=float(p.power), se=float(p.se), n_trials=p.n_trials,
                                 threshold=float(p.threshold), alpha_hat=float(p.alpha_hat),
                                 master_seed=cfg.seed))
            series.append((f"{det} m={m}", [(p.mu, p.power) for p in curve.points]))
            print(f"{det} m={m}: " + ", ".join(f"mu={p.mu:.3g} power={p.power:.4f}" for p in curve.points))
    if args.format in ("csv", "both"):
        path = os.path.join(args.out, "power.csv")
        _write_csv(path, POWER_COLUMNS, rows)
        manifest.outputs.append(path)
    if args.format in ("json", "both"):
        path = os.path.join(args.out, "power.json")
        _write_json(path, {"rows": rows, "runtime_seconds": time.perf_counter() - t0,
                           "version": manifest.version})
        manifest.outputs.append(path)
    if args.svg:
        path = os.path.join(args.out, "power.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(power_svg(series, title=f"{cfg.graph}, {cfg.family}, alpha={cfg.alpha}"))
        manifest.outputs.append(path)
    _finish(args, manifest, t0)
    return 0


def cmd_mu95(args) -> int:
    t0 = time.perf_counter()
    cfg = _setup(args)
    manifest = RunManifest("mu95", format_config(cfg), version_string(), cfg.seed)
    fam = families.get_family(cfg.family)
    rows = []
    failures = 0
    for det in cfg.detector:
        n_cal, n_pow = cfg.trials(det)
        for m in cfg.m:
            g = _graph(cfg, m, det)
            row = dict(detector=det, graph=cfg.graph, m=m, mu95=math.nan, lo=math.nan, hi=math.nan,
                       power_lo=math.nan, power_hi=math.nan, evaluations=0, status="ok", message="")
            try:
                r = mu95_search(det, g, fam, _source(cfg, g), cfg.alpha, cfg.target, n_pow, cfg.tol, cfg.seed,
                                n_cal, cfg.lo, cfg.hi, args.threads, cfg.B)
                row.update(mu95=r.mu, lo=r.lo, hi=r.hi, power_lo=r.power_lo, power_hi=r.power_hi,
                           evaluations=r.evaluations)
                print(f"{det} m={m}: mu95 = {r.mu:.4f} in [{r.lo:.4f}, {r.hi:.4f}]")
            except (SearchError, ValueError) as e:
                failures += 1
                row.update(status="failed", message=str(e))
                print(f"{det} m={m}: failed: {e}", file=sys.stderr)
            rows.append(row)
    path = os.path.join(args.out, "mu95.csv")
    _write_csv(path, MU95_COLUMNS, rows)
    manifest.outputs.append(path)
    # wide layout: one row per detector, one column per m
    wide = os.path.join(args.out, "mu95_table.csv")
    cols = ("detector",) + tuple(f"m={m}" for m in cfg.m)
    table = []
    for det in cfg.detector:
        cells = {r["m"]: r["mu95"] for r in rows if r["detector"] == det}
        table.append({"detector": det, **{f"m={m}": ("" if math.isnan(cells[m]) else round(cells[m], 4))
                                          for m in cfg.m}})
    _write_csv(wide, cols, table)
    manifest.outputs.append(wide)
    if args.format in ("json", "both"):
        path = os.path.join(args.out, "mu95.json")
        _write_json(path, {"rows": rows, "runtime_seconds": time.perf_counter() - t0})
        manifest.outputs.append(path)
    _finish(args, manifest, t0)
    return 1 if failures == len(rows) else 0


def cmd_verify(args) -> int:
    def show(r):
        print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.1f}s)", flush=True)

    results = run_checks(args.level, show)
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


# -- argument parsing --------------------------------------------------------


def _int_list(s: str) -> tuple:
    try:
        return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"expected comma separated integers, got {s!r}") from None


def _threads(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (overrides the config)")
    common.add_argument("--threads", type=_threads, default=None,
                        help="worker threads (default: $TRAILSCAN_THREADS or all cores)")
    common.add_argument("--svg", action="store_true", help="also write a power curve figure")
    common.add_argument("--format", choices=("csv", "json", "both"), default="csv")

    p = argparse.ArgumentParser(prog="trailscan", description="Detection of anomalous paths in layered graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("theory", help="closed-form thresholds and constants")
    t.add_argument("--family", help="one family (default: all)")
    t.add_argument("--was-mu95", help="comma separated m values for the WAS mu_0.95 table")
    t.add_argument("--tree-m", help="comma separated depths for the tree GLRT bound")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--format", choices=("text", "json"), default="text")
    sub.add_parser("power", parents=[common], help="power curves over a mu or theta grid")
    sub.add_parser("mu95", parents=[common], help="mean shift reaching 95%% power")
    v = sub.add_parser("verify", help="run the self-check suite")
    v.add_argument("--level", choices=("fast", "full"), default="fast")
    return p


COMMANDS = {"theory": cmd_theory, "power": cmd_power, "mu95": cmd_mu95, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as e:
        print(f"trailscan: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"trailscan: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
