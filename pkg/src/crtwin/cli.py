"""Command-line interface: ``crtwin analyze | simulate | calibrate``.

Exit codes: 0 success, 2 data error (unreadable or invalid input),
3 the requested method cannot be applied to the data.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import METHODS, analyze
from .data import BOTH_EVENTS, GEHAN, load_dataset
from .errors import DataError, MethodError, ParseError
from .estimators import ESTIMANDS
from .pairwise import PairCache
from .simulation import Scenario, calibrate_censoring, run_scenario, scenario_hash

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DATA, EXIT_METHOD = 0, 2, 3

log = logging.getLogger("crtwin")


def _clean(x):
    """JSON-safe value: non-finite floats become ``null``, tuples lists."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):  # numpy scalar
        return _clean(x.item())
    return x


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def default_workers() -> int:
    env = os.environ.get("CRTWIN_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ----------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    rule = GEHAN if args.rule == "gehan" else BOTH_EVENTS
    try:
        d = load_dataset(args.input, rule)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        r = analyze(d, args.method, args.estimand, args.null, args.alternative, args.alpha, not args.normal,
                    args.B, args.seed, rule, tie_cov=args.tie_cov, fs_reference=args.fs_reference)
    except (MethodError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_METHOD
    t = PairCache(d, rule).tallies()
    report = {
        "schema_version": SCHEMA_VERSION,
        "method": r.method,
        "estimand": r.estimand,
        "estimate": r.estimate,
        "inference_scale": "log" if r.estimand in ("WR", "WO") else "identity",
        "tau_hat": r.tau_hat,
        "null": r.tau0,
        "se": r.se,
        "statistic": r.statistic,
        "p_value": r.p_value,
        "ci": list(r.ci) if r.ci is not None else None,
        "alpha": args.alpha,
        "alternative": r.alternative,
        "reference": r.reference,
        "df": r.df,
        "rule": rule.variant.value,
        "n_clusters": d.M,
        "n_treated_clusters": d.M1,
        "n_subjects": d.n,
        "tallies": {"W": t.W, "L": t.L, "T": t.T, "n1": t.n1, "n0": t.n0},
        "warnings": list(r.flags),
        "details": r.details,
    }
    text = _dump(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------
# scenario grids

_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}


def _scenario_from_row(row: dict, line: int) -> tuple[Scenario, float | None]:
    kw = {}
    target = None
    for key, raw in row.items():
        if key is None:
            raise ParseError("more cells than header columns", row=line)
        key = key.strip()
        raw = (raw or "").strip()
        if raw == "":
            continue
        try:
            if key == "target_tie":
                target = float(raw)
            elif key not in _FIELDS:
                raise ParseError(f"unknown column {key!r}", row=line)
            elif key == "name":
                kw[key] = raw
            elif key in ("M", "min_cluster_size"):
                kw[key] = int(raw)
            else:
                kw[key] = float(raw)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad value {raw!r} for {key}", row=line) from None
    try:
        s = Scenario(**kw)
    except ValueError as exc:
        raise ParseError(str(exc), row=line) from None
    if target is not None and not 0 < target < 1:
        raise ParseError("target_tie must lie in (0, 1)", row=line)
    return s, target


def read_grid(path) -> list[tuple[Scenario, float | None]]:
    """Scenario grid CSV: columns are Scenario fields plus optional ``target_tie``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        out = []
        for line, row in enumerate(reader, start=2):
            s, target = _scenario_from_row(row, line)
            if not s.name:
                s = s.replace(name=f"scenario{line - 1:03d}")
            out.append((s, target))
    if not out:
        raise ParseError("grid has no scenarios", row=1)
    return out


def _derived_seed(seed: int, key: str) -> int:
    return int(hashlib.sha256(f"{seed}:{key}".encode()).hexdigest()[:8], 16)


RESULT_COLUMNS = ("scenario", "procedure", "estimand", "reps", "rejections", "undefined", "failures", "rate",
                  "mean_pi_tie")


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()})


def cmd_simulate(args) -> int:
    try:
        grid = read_grid(args.grid)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    manifest.setdefault("schema_version", SCHEMA_VERSION)
    entries = manifest.setdefault("scenarios", {})
    procedures = tuple(args.procedures.split(","))
    estimands = tuple(args.estimands.split(","))
    settings = {"reps": args.reps, "procedures": procedures, "estimands": estimands, "B": args.B,
                "alpha": args.alpha, "seed": args.seed, "calib_reps": args.calib_reps,
                "calib_tol": args.calib_tol, "reference": args.reference}
    ok = failed = skipped = 0
    for s, target in grid:
        h = scenario_hash(s, target_tie=target, **settings)
        fname = f"{s.name}.csv"
        prev = entries.get(s.name)
        if prev and prev.get("hash") == h and prev.get("status") == "ok" and (out / fname).exists():
            skipped += 1
            log.info("skip %s (up to date)", s.name)
            continue
        seed = _derived_seed(args.seed, s.name)
        entry = {"hash": h, "seed": seed, "target_tie": target, "file": fname, "scenario": s.to_dict()}
        try:
            if target is not None:
                cal = calibrate_censoring(s, target, args.calib_reps, args.calib_tol, seed=seed)
                s = s.replace(xi=cal.xi)
                entry.update(xi=cal.xi, calibration_pi_tie=cal.achieved, calibration_flags=list(cal.flags))
            else:
                entry.update(xi=s.xi)
            use_t = None if args.reference == "auto" else args.reference == "t"
            res = run_scenario(s, args.reps, procedures, estimands, args.B, seed, args.alpha, use_t,
                               args.workers)
            _write_rows(out / fname, res.rows())
            entry.update(status="ok", mean_pi_tie=res.mean_pi_tie, failures=res.failures, use_t=res.use_t,
                         meta=res.meta)
            ok += 1
            log.info("done %s", s.name)
        except (MethodError, ValueError) as exc:
            entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            failed += 1
            log.warning("failed %s: %s", s.name, exc)
        entries[s.name] = entry
        manifest["settings"] = settings
        mpath.write_text(_dump(manifest), encoding="utf-8")
    print(f"{ok} run, {skipped} skipped, {failed} failed", file=sys.stderr)
    return EXIT_METHOD if failed and not (ok or skipped) else EXIT_OK


# ----------------------------------------------------------------------
# calibrate

def _parse_kv(items) -> dict:
    row = {}
    for item in items or ():
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        row[k] = v
    return row


def cmd_calibrate(args) -> int:
    try:
        if args.grid:
            grid = read_grid(args.grid)
            if not 1 <= args.row <= len(grid):
                raise ParseError(f"grid has {len(grid)} scenarios", row=args.row + 1)
            s, t = grid[args.row - 1]
            target = args.target if args.target is not None else t
        else:
            s, _ = _scenario_from_row(_parse_kv(args.set), line=0)
            target = args.target
        if target is None:
            raise ParseError("no target tie probability given")
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        cal = calibrate_censoring(s, target, args.reps, args.tol, seed=args.seed)
    except (MethodError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_METHOD
    for xi, f in cal.trace:
        print(f"xi={xi:.6g} mean_pi_tie={f:.5f}", file=sys.stderr)
    report = {"schema_version": SCHEMA_VERSION, "xi": cal.xi, "achieved": cal.achieved, "target": cal.target,
              "iterations": cal.iterations, "flags": list(cal.flags), "scenario": s.to_dict(),
              "trace": [list(p) for p in cal.trace], "reps": args.reps, "seed": args.seed}
    text = _dump(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crtwin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate and test one win statistic")
    a.add_argument("input", help="CSV with columns clu,id,trt,t,st")
    a.add_argument("--method", choices=METHODS, default="wald_score")
    a.add_argument("--estimand", choices=ESTIMANDS, default="WD", type=str.upper)
    a.add_argument("--null", type=float, default=None,
                   help="null value on the inference scale (log scale for WR/WO); default no effect")
    a.add_argument("--alternative", choices=("two.sided", "greater", "less"), default="two.sided")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--normal", action="store_true", help="Wald tests: normal instead of t(M-2) reference")
    a.add_argument("--fs-reference", choices=("normal", "t"), default="normal",
                   help="reference for the FS test (default normal)")
    a.add_argument("--B", type=int, default=2000, help="Monte Carlo permutations when enumeration is too large")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--rule", choices=("both", "gehan"), default="both")
    a.add_argument("--tie-cov", action="store_true",
                   help="FCL win ratio variance also accounts for tie-probability variability")
    a.add_argument("--out", help="write the JSON report here instead of stdout")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run a Monte Carlo study over a scenario grid")
    s.add_argument("grid", help="CSV of scenarios (Scenario fields, optional target_tie)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--reps", type=int, default=2000)
    s.add_argument("--procedures", default=",".join(METHODS))
    s.add_argument("--estimands", default=",".join(ESTIMANDS))
    s.add_argument("--B", type=int, default=1000)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reference", choices=("auto", "t", "normal"), default="auto",
                   help="Wald reference: auto uses t(M-2) below 50 clusters")
    s.add_argument("--calib-reps", type=int, default=200)
    s.add_argument("--calib-tol", type=float, default=0.005)
    s.add_argument("--workers", type=int, default=default_workers())
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="find the censoring rate giving a target tie probability")
    c.add_argument("--target", type=float, default=None)
    c.add_argument("--set", nargs="*", metavar="FIELD=VALUE", help="scenario fields")
    c.add_argument("--grid", help="take the scenario from this grid file")
    c.add_argument("--row", type=int, default=1, help="1-based scenario index in --grid")
    c.add_argument("--reps", type=int, default=200)
    c.add_argument("--tol", type=float, default=0.01)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "simulate":
        for name in args.procedures.split(","):
            if name not in METHODS:
                print(f"error: unknown procedure {name!r}", file=sys.stderr)
                return EXIT_DATA
        for name in args.estimands.split(","):
            if name not in ESTIMANDS:
                print(f"error: unknown estimand {name!r}", file=sys.stderr)
                return EXIT_DATA
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
