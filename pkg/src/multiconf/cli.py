"""Command line interface.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import ExperimentConfig, estimate_measure, load_dataset, run_experiment
from .core import ConfigError, DataError, NumericalError
from .data import synth_dataset, write_csv
from .exact import ExactConformal
from .oracle import GridSpec, grid_region
from .predictors import PredictorFailure, hats_for, make_predictor
from .report import emit_benchmark_table, emit_report
from .rootcp import default_directions, rootcp_region
from .union import Box, export_union_csv, random_union, region_volume, smart_union


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _load_config(path, args) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    overrides = {
        "alpha": args.alpha,
        "seed": args.seed,
        "repetitions": getattr(args, "reps", None),
        "eps": args.eps,
    }
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v
    if getattr(args, "k_directions", None):
        ks = _int_list(args.k_directions)
        raw["K"] = ks[0]
    return raw


def _int_list(s):
    try:
        return [int(v) for v in str(s).split(",") if v]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {s!r}") from None


def _add_overrides(p, reps=True):
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", help="method, or comma-separated list of methods")
    if reps:
        p.add_argument("--reps", type=int)
    p.add_argument("--k-directions", help="number of search directions (comma list for region-export)")
    p.add_argument("--eps", type=float)


def cmd_run(args) -> int:
    raw = _load_config(args.config, args)
    methods = args.method.split(",") if args.method else [raw.get("method", "rootcp_ellipse")]
    configs = [ExperimentConfig.from_dict({**raw, "method": m}) for m in methods]
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for m, cfg in zip(methods, configs):
        rep = run_experiment(cfg)
        path = os.path.join(args.out, f"report_{m}.{args.format}")
        emit_report(rep, args.format, path)
        reports.append(rep)
        tbar = "n/a" if rep.mean_normalized_time is None else f"{rep.mean_normalized_time:.3g}"
        vol = "n/a" if rep.mean_volume is None else f"{rep.mean_volume:.4g}"
        print(f"{m}: coverage={rep.coverage:.3f} volume={vol} inf={rep.n_infinite} failed={rep.n_failed} T={tbar}")
    emit_benchmark_table(reports, os.path.join(args.out, "benchmark.csv"))
    return 0


def cmd_synth(args) -> int:
    data = synth_dataset(
        args.n, args.p, args.q, args.informative_frac, args.effective_rank_frac, args.noise_sd, args.seed
    )
    write_csv(data, args.out)
    print(f"wrote {data.n} rows ({data.p} covariates, {data.q} responses) to {args.out}")
    return 0


def _held_out_problem(raw, args):
    cfg = ExperimentConfig.from_dict(raw)
    full = load_dataset(cfg)
    if not 0 <= args.held_out < full.n:
        raise ConfigError(f"held-out index {args.held_out} out of range [0, {full.n})")
    data, x_new, y_new = full.split_out(args.held_out)
    predictor = make_predictor(cfg.predictor, **cfg.predictor_params)
    measure = estimate_measure(cfg.measure, predictor, data)
    return cfg, data, x_new, y_new, predictor, measure


def cmd_grid_export(args) -> int:
    raw = _load_config(args.config, args)
    cfg, data, x_new, _, predictor, measure = _held_out_problem(raw, args)
    spec = GridSpec.around(data.responses, args.points or cfg.grid_points, cfg.box_expand)
    if args.union:
        ex = ExactConformal(hats_for(predictor, data, x_new), data, measure)
        regions = ex.regions()
        box = Box(spec.lower, spec.upper)
        if args.union == "smart":
            vols = [region_volume(r, box, cfg.mc_samples, cfg.seed + i) for i, r in enumerate(regions)]
            u = smart_union(regions, cfg.alpha, vols)
        else:
            u = random_union(regions, cfg.k_regions or len(regions), cfg.seed)
        export_union_csv(u, spec.lower, spec.upper, spec.points_per_dim, args.out)
    else:
        grid = grid_region(predictor, data, x_new, cfg.alpha, spec, measure, fast=cfg.grid_fast)
        grid.to_csv(args.out)
        print(f"grid region: {int(grid.mask.sum())} of {spec.size} points, area {grid.area:.4g}")
    return 0


def cmd_region_export(args) -> int:
    raw = _load_config(args.config, args)
    cfg, data, x_new, _, predictor, measure = _held_out_problem(raw, args)
    kind = "hull2d" if args.kind == "hull" else "ellipsoid"
    ks = _int_list(args.k_directions) if args.k_directions else [cfg.K or default_directions(data.q, kind)]
    os.makedirs(args.out, exist_ok=True)
    for K in ks:
        res = rootcp_region(predictor, data, x_new, cfg.alpha, K, cfg.eps, kind, measure, cfg.seed)
        pts_path = os.path.join(args.out, f"boundary_K{K}.csv")
        with open(pts_path, "w") as fh:
            fh.write(",".join([f"z{k + 1}" for k in range(data.q)] + ["side", "t", "direction_index"]) + "\n")
            for j, p in enumerate(res.points):
                fh.write(",".join([repr(float(v)) for v in p.z] + [p.side, repr(float(p.t)), str(j // 2)]) + "\n")
        with open(os.path.join(args.out, f"approx_K{K}.json"), "w") as fh:
            json.dump(
                {
                    "schema_version": 1,
                    "K": K,
                    "z0": res.z0.tolist(),
                    "fits": res.fits,
                    "unbounded": [list(u) for u in res.unbounded],
                    "star_violations": [list(s) for s in res.star_violations],
                    "approx": res.approx.to_dict(),
                },
                fh,
                indent=2,
            )
        print(f"K={K}: {len(res.points)} boundary points, area {res.approx.volume():.4g}, {res.fits} fits")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multiconf", description="Multi-target conformal prediction regions")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="run an experiment config")
    _add_overrides(p)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out", default="reports")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--informative-frac", type=float, default=0.8)
    p.add_argument("--effective-rank-frac", type=float, default=0.6)
    p.add_argument("--noise-sd", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid-export", help="grid p-values (or a union raster) as CSV")
    _add_overrides(p, reps=False)
    p.add_argument("--held-out", type=int, default=0)
    p.add_argument("--points", type=int)
    p.add_argument("--union", choices=["smart", "random"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid_export)

    p = sub.add_parser("region-export", help="rootCP boundary points (CSV) and convex fit (JSON)")
    _add_overrides(p, reps=False)
    p.add_argument("--held-out", type=int, default=0)
    p.add_argument("--kind", choices=["ellipse", "hull"], default="ellipse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_region_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, PredictorFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
