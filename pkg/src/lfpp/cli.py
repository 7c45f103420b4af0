"""Command-line front end.

Exit codes: 0 success, 1 error, 2 a requested ``--assert-*`` check failed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from . import analysis, coupling, gff, lattice, metric
from .errors import LfppError

SCHEMA_VERSION = 1

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2

REPORT_COLUMNS = ("xi", "n", "rep", "seed", "distance", "hop_count", "crossing_found")
BATCH_COLUMNS = ("distance", "geodesic_length", "relaxations", "wall_ns")


class ConfigError(LfppError, ValueError):
    pass


@dataclass
class RunConfig:
    """Parameters of one CLI run; every field optional except the schema version."""

    schema_version: int = SCHEMA_VERSION
    command: str | None = None
    n: int | None = None
    m: int | None = None
    xi: float | None = None
    seed: int | None = None
    reps: int | None = None
    ladder: list[int] | None = None
    region: str | None = None
    chi: float | None = None
    mode: str | None = None
    pairs: int | None = None
    jobs: int | None = None
    out: str | None = None

    def to_toml(self) -> str:
        data = {k: v for k, v in dataclasses.asdict(self).items() if v is not None}
        return tomli_w.dumps(data)

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        data = tomli.loads(text)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {version!r} is not supported "
                              f"(expected {SCHEMA_VERSION})")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(self)}
        updates = {k: v for k, v in overrides.items() if k in known and v is not None}
        return dataclasses.replace(self, **updates)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return (x, y)


def _ladder(text: str) -> list[int]:
    try:
        return [int(c) for c in text.split(",") if c]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [name for name in names if getattr(cfg, name) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise ConfigError(f"missing required parameter(s): {flags}")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _region(path: str | None, default: lattice.RectRegion) -> lattice.RectRegion:
    if path is None:
        return default
    return lattice.read_region(path, interior_only=default.interior_only)


def _lattice_point(p) -> tuple[int, int]:
    if not all(float(c).is_integer() for c in p):
        raise ConfigError(f"{p} is not a lattice point")
    return (int(p[0]), int(p[1]))


# --- commands ---------------------------------------------------------------

def cmd_sample(cfg: RunConfig, args) -> int:
    _require(cfg, "n", "seed")
    if cfg.n < 2:
        raise ConfigError(f"--n must be at least 2, got {cfg.n}")
    sample = gff.sample_dgff(cfg.n, cfg.seed)
    out = Path(cfg.out or f"dgff_n{cfg.n}_seed{cfg.seed}.bin")
    gff.write_snapshot(sample, out)
    _emit({"n": cfg.n, "seed": sample.seed, "min": float(sample.values.min()),
           "max": float(sample.values.max()), "checksum": sample.checksum(), "path": str(out)})
    return EXIT_OK


def cmd_couple(cfg: RunConfig, args) -> int:
    _require(cfg, "n", "m", "seed")
    if cfg.m < 2:
        raise ConfigError(f"--m must be at least 2, got {cfg.m}")
    if cfg.n < 12:
        raise ConfigError(f"--n must be at least 12, got {cfg.n}")
    mode = coupling.CouplingMode(cfg.mode or coupling.CouplingMode.EXACT_COARSE.value)
    coupling.check_budget(cfg.n, cfg.m)
    solver = coupling.projection_solver(cfg.n, cfg.m)
    sample = coupling.build_coupling(cfg.n, cfg.m, cfg.seed, mode, solver)
    region = _region(cfg.region, lattice.HALF_SQUARE)
    residual = float(np.abs(solver.project(sample.fine.values) - sample.coarse.values).max())
    out_dir = Path(cfg.out or f"coupling_n{cfg.n}_m{cfg.m}_seed{cfg.seed}")
    paths = coupling.write_bundle(sample, out_dir)
    _emit({
        "n": cfg.n, "m": cfg.m, "seed": sample.seed, "mode": mode.value,
        "discrepancy": coupling.discrepancy_stat(sample, region),
        "projection_residual": residual,
        "checksums": {k: getattr(sample, k).checksum() for k in coupling.BUNDLE_FILES},
        "sidecar": str(paths["sidecar"]),
    })
    return EXIT_OK


def _load_coarse(cfg: RunConfig, args) -> gff.FieldSample:
    if args.field:
        return gff.read_snapshot(args.field)
    if args.sample_inline:
        _require(cfg, "n", "seed")
        return gff.sample_dgff(cfg.n, cfg.seed)
    raise ConfigError("give --field FILE or --sample-inline with --n and --seed")


def _run_query(kind: metric.MetricKind, xi: float, source, target, region_path,
               field: gff.FieldSample | None, bundle: coupling.CouplingSample | None):
    start = time.perf_counter_ns()
    if kind == metric.MetricKind.FINE_LFPP:
        if bundle is None:
            raise ConfigError("fine-lfpp queries need --bundle DIR")
        if len(source) != 1 or len(target) != 1:
            raise ConfigError("fine-lfpp queries take a single source and target point")
        region = _region(region_path, lattice.HALF_SQUARE)
        res = metric.fine_lfpp_distance(bundle, source[0], target[0], region, xi)
    else:
        if field is None:
            raise ConfigError(f"{kind.value} queries need a field")
        if region_path is None and kind == metric.MetricKind.LATTICE_LFPP:
            mask = lattice.DomainMask(field.n, ~np.isnan(field.values))
        elif region_path is None:
            mask = lattice.DomainMask.full(field.n)
        else:
            mask = lattice.rasterize(lattice.read_region(region_path), field.n)
        q = metric.DistanceQuery([_lattice_point(p) for p in source],
                                 [_lattice_point(p) for p in target], mask, kind, xi)
        if kind == metric.MetricKind.DLFPP:
            res = metric.dlfpp_distance(field, q)
        else:
            res = metric.lattice_lfpp_distance(field, q)
    wall = time.perf_counter_ns() - start
    return {"distance": res.distance, "geodesic_length": len(res.geodesic) if res.geodesic else 0,
            "relaxations": res.relaxations, "wall_ns": wall}


def cmd_dist(cfg: RunConfig, args) -> int:
    bundle = coupling.read_bundle(args.bundle) if args.bundle else None
    if args.field or args.sample_inline:
        field = _load_coarse(cfg, args)
    elif bundle is not None:
        field = bundle.circ if args.kind == "lattice-lfpp" else bundle.coarse
    else:
        field = None
    if args.batch:
        rows = []
        for lineno, line in enumerate(Path(args.batch).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                spec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.batch}:{lineno}: {exc}") from None
            kind = metric.MetricKind(spec.get("kind", "dlfpp"))
            rows.append(_run_query(kind, float(spec.get("xi", cfg.xi or 0.4)), spec["source"],
                                   spec["target"], spec.get("region"), field, bundle))
        out = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
        try:
            writer = csv.DictWriter(out, fieldnames=BATCH_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        finally:
            if out is not sys.stdout:
                out.close()
        return EXIT_OK
    if args.u is None or args.v is None:
        raise ConfigError("give --u and --v (or --batch FILE)")
    kind = metric.MetricKind(args.kind)
    result = _run_query(kind, cfg.xi or 0.4, [args.u], [args.v], cfg.region, field, bundle)
    result["kind"] = kind.value
    _emit(result)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    _require(cfg, "n", "m", "seed", "xi")
    mode = coupling.CouplingMode(cfg.mode or coupling.CouplingMode.EXACT_COARSE.value)
    sample = coupling.build_coupling(cfg.n, cfg.m, cfg.seed, mode)
    region = _region(cfg.region, lattice.HALF_SQUARE)
    report = metric.compare_metrics(sample, region, cfg.pairs or 30, cfg.xi,
                                    seed=gff.derive_seed(cfg.seed, 0xC0))
    _emit(report)
    return EXIT_OK


def _write_report_csv(path: str, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in records:
            writer.writerow([repr(r.xi), r.n, r.rep, r.seed, repr(r.distance), r.hop_count,
                             int(r.crossing_found)])


def _check_slope(slope: float, args) -> bool:
    ok = True
    if args.assert_slope_max is not None and not slope <= args.assert_slope_max:
        print(f"assertion failed: slope {slope:.4f} > {args.assert_slope_max}", file=sys.stderr)
        ok = False
    if args.assert_slope_min is not None and not slope >= args.assert_slope_min:
        print(f"assertion failed: slope {slope:.4f} < {args.assert_slope_min}", file=sys.stderr)
        ok = False
    return ok


def cmd_exponent(cfg: RunConfig, args) -> int:
    _require(cfg, "xi", "ladder", "reps", "seed")
    est = analysis.estimate_exponent(cfg.xi, cfg.ladder, cfg.reps, cfg.seed,
                                     jobs=cfg.jobs or 1, chi=cfg.chi or analysis.DEFAULT_CHI)
    summary = est.summary(slack=args.bound_slack)
    summary.update({"reps": cfg.reps, "seed": cfg.seed})
    if args.csv:
        _write_report_csv(args.csv, est.records)
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    ok = _check_slope(est.slope, args)
    if args.assert_bound and summary["bound_check"] is not True:
        print("assertion failed: d_gamma bound check did not hold", file=sys.stderr)
        ok = False
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_levelset(cfg: RunConfig, args) -> int:
    chi = cfg.chi or analysis.DEFAULT_CHI
    sample = _load_coarse(cfg, args)
    q = analysis.LevelSetQuery.from_chi(sample.n, chi)
    res = analysis.levelset_crossing(sample, q)
    out = {"n": sample.n, "seed": sample.seed, "chi": chi, "threshold": q.threshold,
           "crossing_found": res.found, "hop_count": res.hop_count}
    ok = True
    if cfg.xi is not None:
        dist = analysis.annulus_distance(sample, cfg.xi, q.annulus).distance
        out["annulus_distance"] = dist
        if res.found:
            bound = analysis.levelset_cost_bound(res, cfg.xi, q.threshold)
            out["cost_bound"] = bound
            out["bound_dominates"] = bound >= dist
            ok = bound >= dist
    _emit(out)
    if args.assert_found and not res.found:
        print("assertion failed: no level-set crossing", file=sys.stderr)
        ok = False
    return EXIT_OK if ok else EXIT_ASSERT


def read_report_csv(path: str) -> list[analysis.ReplicateRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
        return [analysis.ReplicateRecord(float(r["xi"]), int(r["n"]), int(r["rep"]), int(r["seed"]),
                                         float(r["distance"]), int(r["hop_count"]),
                                         bool(int(r["crossing_found"])))
                for r in reader]


def summarize_records(records, slack: float = 0.0) -> list[dict]:
    """Recompute exponent summaries, one per ``xi``, from replicate records."""
    out = []
    for xi in sorted({r.xi for r in records}):
        group = [r for r in records if r.xi == xi]
        ladder = sorted({r.n for r in group})
        medians = [float(np.median([math.log(r.distance) for r in group if r.n == n])) for n in ladder]
        slope, intercept, stderr = analysis.fit_loglog(ladder, np.exp(medians))
        est = analysis.ExponentEstimate(xi, tuple(ladder), tuple(medians), slope, intercept, stderr)
        out.append(est.summary(slack))
    return out


def cmd_report(cfg: RunConfig, args) -> int:
    summaries = summarize_records(read_report_csv(args.csv), args.bound_slack)
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    _emit(summaries)
    ok = all(_check_slope(s["slope"], args) for s in summaries)
    return EXIT_OK if ok else EXIT_ASSERT


COMMANDS = {
    "sample": cmd_sample, "couple": cmd_couple, "dist": cmd_dist, "compare": cmd_compare,
    "exponent": cmd_exponent, "levelset": cmd_levelset, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lfpp", description="Discrete and continuum Liouville FPP simulations.")
    parser.add_argument("--config", help="TOML run configuration; flags override its values")
    parser.add_argument("--save-config", help="write the effective configuration and continue")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *names):
        if "n" in names:
            p.add_argument("--n", type=int)
        if "m" in names:
            p.add_argument("--m", type=int)
        if "seed" in names:
            p.add_argument("--seed", type=int)
        if "xi" in names:
            p.add_argument("--xi", type=float)
        if "region" in names:
            p.add_argument("--region", help="region file of rational vertices")
        if "mode" in names:
            p.add_argument("--mode", choices=[m.value for m in coupling.CouplingMode])
        if "out" in names:
            p.add_argument("--out")

    p = sub.add_parser("sample", help="sample a zero-boundary DGFF snapshot")
    common(p, "n", "seed", "out")

    p = sub.add_parser("couple", help="build a coupled coarse/fine field bundle")
    common(p, "n", "m", "seed", "mode", "region", "out")

    p = sub.add_parser("dist", help="shortest-path distance queries")
    common(p, "n", "seed", "xi", "region", "out")
    p.add_argument("--kind", choices=[k.value for k in metric.MetricKind], default="dlfpp")
    p.add_argument("--field", help="field snapshot file")
    p.add_argument("--bundle", help="coupling bundle directory")
    p.add_argument("--sample-inline", action="store_true")
    p.add_argument("--u", type=_point)
    p.add_argument("--v", type=_point)
    p.add_argument("--batch", help="JSON-lines query file; CSV results to --out or stdout")

    p = sub.add_parser("compare", help="compare DLFPP with fine-mesh LFPP under a coupling")
    common(p, "n", "m", "seed", "xi", "mode", "region")
    p.add_argument("--pairs", type=int)

    p = sub.add_parser("exponent", help="estimate the annulus distance exponent")
    common(p, "xi", "seed", "out")
    p.add_argument("--ladder", type=_ladder)
    p.add_argument("--reps", type=int)
    p.add_argument("--chi", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--csv", help="per-replicate CSV report")
    p.add_argument("--bound-slack", type=float, default=0.0)
    p.add_argument("--assert-slope-max", type=float)
    p.add_argument("--assert-slope-min", type=float)
    p.add_argument("--assert-bound", action="store_true")

    p = sub.add_parser("levelset", help="level-set crossing of the annulus")
    common(p, "n", "seed", "xi")
    p.add_argument("--chi", type=float)
    p.add_argument("--field")
    p.add_argument("--sample-inline", action="store_true", default=True)
    p.add_argument("--assert-found", action="store_true")

    p = sub.add_parser("report", help="summarize an exponent CSV report")
    common(p, "out")
    p.add_argument("--csv", required=True)
    p.add_argument("--bound-slack", type=float, default=0.0)
    p.add_argument("--assert-slope-max", type=float)
    p.add_argument("--assert-slope-min", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        base = RunConfig()
        if args.config:
            base = RunConfig.from_toml(Path(args.config).read_text())
            if base.command not in (None, args.command):
                raise ConfigError(f"config is for command {base.command!r}, not {args.command!r}")
        cfg = base.merged(vars(args))
        cfg.command = args.command
        if args.save_config:
            Path(args.save_config).write_text(cfg.to_toml())
        return COMMANDS[args.command](cfg, args)
    except (LfppError, OSError, ValueError, KeyError) as exc:
        print(f"lfpp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
