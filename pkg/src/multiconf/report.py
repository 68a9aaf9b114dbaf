"""Report serialization (JSON and CSV), both tagged with ``schema_version``."""

from __future__ import annotations

import csv
import dataclasses
import json
import math

from .bench import Report, RunRecord

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version",
    "record",
    "method",
    "repetition",
    "held_out",
    "covered",
    "volume",
    "fits_performed",
    "failed",
    "error",
    "coverage",
    "mean_volume",
    "n_infinite",
    "n_failed",
    "wall_time",
    "oracle_wall_time",
    "mean_normalized_time",
]
TIMING_COLUMNS = ("wall_time", "oracle_wall_time", "mean_normalized_time")


def _enc(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _dec(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def report_to_dict(report: Report) -> dict:
    d = dataclasses.asdict(report)
    d["runs"] = [{k: _enc(v) for k, v in r.items()} for r in d["runs"]]
    for k in ("coverage", "mean_volume", "mean_wall_time", "mean_normalized_time"):
        d[k] = _enc(d[k])
    return {"schema_version": SCHEMA_VERSION, **d}


def report_from_dict(d: dict) -> Report:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
    d = dict(d)
    d.pop("schema_version")
    runs = [RunRecord(**{k: _dec(v) for k, v in r.items()}) for r in d.pop("runs")]
    return Report(runs=runs, **{k: _dec(v) for k, v in d.items()})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return _enc(v) if not math.isfinite(v) else repr(float(v))
    return v


def csv_rows(report: Report):
    method = report.config.get("method", "")
    for r in report.runs:
        yield {
            "schema_version": SCHEMA_VERSION,
            "record": "run",
            "method": method,
            "repetition": r.repetition,
            "held_out": r.held_out,
            "covered": _fmt(r.covered),
            "volume": _fmt(r.volume),
            "fits_performed": r.fits_performed,
            "failed": _fmt(r.failed),
            "error": r.error,
            "wall_time": _fmt(r.wall_time),
            "oracle_wall_time": _fmt(r.oracle_wall_time),
        }
    yield {
        "schema_version": SCHEMA_VERSION,
        "record": "summary",
        "method": method,
        "coverage": _fmt(report.coverage),
        "mean_volume": _fmt(report.mean_volume),
        "n_infinite": report.n_infinite,
        "n_failed": report.n_failed,
        "wall_time": _fmt(report.mean_wall_time),
        "mean_normalized_time": _fmt(report.mean_normalized_time),
    }


def emit_report(report: Report, fmt: str, path) -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report_to_dict(report), fh, indent=2)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            wr.writeheader()
            for row in csv_rows(report):
                wr.writerow(row)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path) -> Report:
    with open(path) as fh:
        return report_from_dict(json.load(fh))


BENCH_COLUMNS = ["method", "predictor", "coverage", "mean_volume", "n_infinite", "n_failed", "mean_normalized_time"]


def emit_benchmark_table(reports, path) -> None:
    """One row per method: average coverage, volume and normalized time."""
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["schema_version"] + BENCH_COLUMNS)
        wr.writeheader()
        for rep in reports:
            wr.writerow(
                {
                    "schema_version": SCHEMA_VERSION,
                    "method": rep.config["method"],
                    "predictor": rep.config["predictor"],
                    "coverage": _fmt(rep.coverage),
                    "mean_volume": _fmt(rep.mean_volume),
                    "n_infinite": rep.n_infinite,
                    "n_failed": rep.n_failed,
                    "mean_normalized_time": _fmt(rep.mean_normalized_time),
                }
            )
