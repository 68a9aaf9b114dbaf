"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting. Plot-ready side outputs go to ``$MULTICONF_ARTIFACTS`` (default
``artifacts/acceptance`` under the repository root).

The diagonal clause of the random-union sweep is unattainable for a correct
union and is kept as a strict xfail, so its line reads FAIL.
"""

import csv
import json
import math
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from multiconf.bench import ExperimentConfig, run_experiment
from multiconf.cli import main
from multiconf.core import ConformityMeasure, Dataset, pvalue_counts
from multiconf.data import synth_dataset
from multiconf.exact import ExactConformal, estimate_w
from multiconf.geometry import in_convex_polygon
from multiconf.hat import constructions
from multiconf.oracle import GridSpec, grid_region, refit_scores
from multiconf.predictors import hats_for, insample_hats, make_predictor
from multiconf.report import TIMING_COLUMNS, emit_report
from multiconf.rootcp import bisection, max_bisection_iterations, rootcp_region
from multiconf.union import random_union

from conftest import record_criterion

pytestmark = pytest.mark.acceptance

ARTIFACTS = Path(os.environ.get("MULTICONF_ARTIFACTS", Path(__file__).resolve().parents[1] / "artifacts" / "acceptance"))

PAPER_SYNTH = {"n": 15, "p": 5, "q": 2, "informative_frac": 0.8, "effective_rank_frac": 0.6, "noise_sd": 5.0}
# 50 training rows plus the held-out tuple
CALIBRATION_DATA = {"synthetic": {"n": 51, "p": 5, "q": 2, "noise_sd": 5.0}}


def _artifacts(name):
    d = ARTIFACTS / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _check(name, passed, detail):
    record_criterion(name, bool(passed), detail)
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    assert passed, detail


def test_1_oracle_equivalence():
    start = time.perf_counter()
    predictors = [("ridge", {"lam": 1.0}), ("nadaraya_watson", {"bandwidth": 1.5}), ("local_linear", {"bandwidth": 2.0})]
    worst, mismatches, cases = 0.0, 0, 0
    for name, params in predictors:
        for kind in ("l1", "wnorm"):
            for q in (1, 2, 3):
                for ds in range(10):
                    r = np.random.default_rng([ds, q, len(name), kind == "l1"])
                    n, p = int(r.integers(8, 26)), int(r.integers(2, 4))
                    x = r.standard_normal((n, p))
                    y = x @ r.standard_normal((p, q)) + r.standard_normal((n, q))
                    data, x_new = Dataset(x, y), r.standard_normal(p)
                    pred = make_predictor(name, **params)
                    if kind == "l1":
                        measure = ConformityMeasure.l1()
                    else:
                        measure = estimate_w(data, insample_hats(pred, data)).measure()
                    ex = ExactConformal(hats_for(pred, data, x_new), data, measure)
                    zs = y.mean(axis=0) + 2 * y.std(axis=0) * r.standard_normal((50, q))
                    closed = ex.scores(zs)
                    counts = ex.pvalue_counts(zs)
                    for j, z in enumerate(zs):
                        ref = refit_scores(pred, data, x_new, z, measure).scores
                        # norm-wise relative error over the n+1 scores
                        rel = np.max(np.abs(closed[j] - ref)) / max(np.max(np.abs(ref)), np.finfo(float).tiny)
                        worst = max(worst, rel)
                        exact_p = Fraction(int(counts[j]), n + 1)
                        mismatches += exact_p != Fraction(int(pvalue_counts(ref[None])[0]), n + 1)
                        cases += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and mismatches == 0 and elapsed < 60 and cases == 3 * 2 * 3 * 10 * 50
    _check(
        "1 oracle equivalence",
        ok,
        f"{cases} cases, max rel err {worst:.2e} (< 1e-8), p-value mismatches {mismatches}, {elapsed:.1f}s (< 60s)",
    )


def _calibration_config(method, **kw):
    return ExperimentConfig.from_dict(
        {
            "data": CALIBRATION_DATA,
            "fresh_data": True,
            "predictor": "ridge",
            "measure": "wnorm",
            "method": method,
            "alpha": 0.1,
            "repetitions": 500,
            "seed": 2024,
            "mc_samples": 2000,
            "oracle_reference": False,
            **kw,
        }
    )


def test_2_smart_union_coverage():
    start = time.perf_counter()
    rep = run_experiment(_calibration_config("exact_union_smart"))
    elapsed = time.perf_counter() - start
    emit_report(rep, "csv", _artifacts("coverage") / "smart_union.csv")
    bound = 0.9 - 3 * math.sqrt(0.09 / 500)
    ok = rep.coverage >= bound and rep.n_failed == 0 and elapsed < 300
    _check(
        "2 smart union coverage",
        ok,
        f"coverage {rep.coverage:.3f} >= {bound:.3f} over 500 reps, failed {rep.n_failed}, {elapsed:.1f}s (< 300s)",
    )


@pytest.fixture(scope="module")
def random_union_sweep():
    rows = []
    for k in (10, 25, 40):
        rep = run_experiment(_calibration_config("exact_union_random", k_regions=k))
        nominal = k / 51
        sigma = math.sqrt(nominal * (1 - nominal) / 500)
        rows.append((k, nominal, rep.coverage, sigma, rep.n_failed))
    path = _artifacts("coverage") / "calibration_curve.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "nominal", "empirical", "stderr", "rank_theory"])
        for k, nominal, cov, sigma, _ in rows:
            wr.writerow([k, repr(nominal), repr(cov), repr(sigma), repr(k / (k + 1))])
    return rows, path


def test_3_random_union_sweep(random_union_sweep):
    rows, path = random_union_sweep
    ok = all(cov >= nom - 3 * s and failed == 0 for _, nom, cov, s, failed in rows)
    detail = ", ".join(f"k={k}: {cov:.3f} >= {nom - 3 * s:.3f}" for k, nom, cov, s, _ in rows)
    _check("3 random union lower bound", ok, detail + f"; curve in {path.name}")


@pytest.mark.xfail(strict=True, reason="union coverage is about k/(k+1), far above k/(n+1); see decisions ledger")
def test_3_calibration_curve_on_diagonal(random_union_sweep):
    rows, _ = random_union_sweep
    ok = all(abs(cov - nom) <= 3 * s for _, nom, cov, s, _ in rows)
    detail = ", ".join(f"k={k}: {cov:.3f} vs diagonal {nom:.3f} (k/(k+1) = {k / (k + 1):.3f})" for k, nom, cov, _, _ in rows)
    _check("3 calibration curve on diagonal", ok, detail)


def test_4_nested_random_selection():
    # null predictor with W = I: E_i = {z : |z| <= |y_i|} are concentric disks
    R, n, hits = 2000, 10, 0
    pred = make_predictor("null")
    w = ConformityMeasure.wnorm(np.eye(2))
    for rep in range(R):
        r = np.random.default_rng([4, rep])
        full = Dataset(np.zeros((n + 1, 1)), r.standard_normal((n + 1, 2)))
        data, x_new, y_new = full.split_out(n)
        regions = ExactConformal(hats_for(pred, data, x_new), data, w).regions()
        hits += random_union(regions, 1, seed=rep).contains(y_new)
    cov = hits / R
    sigma = math.sqrt(0.25 / R)
    _check("4 nested k=1 coverage", abs(cov - 0.5) <= 3 * sigma, f"coverage {cov:.4f}, |cov - 1/2| <= {3 * sigma:.4f}")


def test_5_rootcp_vs_exact_grid():
    start = time.perf_counter()
    full = synth_dataset(**PAPER_SYNTH, seed=0)
    data, x_new, _ = full.split_out(0)
    pred = make_predictor("ridge", lam=1.0)
    w = estimate_w(data, insample_hats(pred, data)).measure()
    spec = GridSpec.around(data.responses, 200)
    grid = grid_region(pred, data, x_new, 0.1, spec, w)
    mask = grid.mask
    interior = not (mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any())
    bnd = grid.boundary_points()
    out = _artifacts("rootcp")
    grid.to_csv(out / "grid_region.csv")
    results = {}
    for K in (3, 5, 10, 30):
        res = rootcp_region(pred, data, x_new, 0.1, K=K, eps=1e-4, kind="hull2d", measure=w)
        results[K] = res
        with open(out / f"boundary_K{K}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["z1", "z2", "side", "t"])
            for p in res.points:
                wr.writerow([repr(float(p.z[0])), repr(float(p.z[1])), p.side, repr(float(p.t))])
        (out / f"hull_K{K}.json").write_text(json.dumps(res.approx.to_dict()))
    res = results[30]
    pts = res.boundary_array()
    # per-axis distance to the nearest boundary cell, in units of that axis' spacing
    cell_dist = np.min(np.max(np.abs(pts[:, None, :] - bnd[None]) / spec.spacing, axis=-1), axis=1)
    grid_pts = spec.points()
    in_hull = in_convex_polygon(res.approx.hull, grid_pts).reshape(mask.shape)
    sym = np.count_nonzero(in_hull ^ mask) * spec.cell_volume
    frac = sym / grid.area
    elapsed = time.perf_counter() - start
    ok = interior and cell_dist.max() <= 1.0 and frac < 0.10 and elapsed < 180 and len(pts) == 60
    _check(
        "5 rootCP vs exact grid",
        ok,
        f"{len(pts)} points, max distance {cell_dist.max():.2f} cells (<= 1), "
        f"sym. diff {100 * frac:.2f}% of area (< 10%), {res.fits} fits, {elapsed:.1f}s (< 180s)",
    )


def test_6_bisection_bound():
    r = np.random.default_rng(6)
    worst_excess, worst_width, ok = -np.inf, 0.0, True
    for _ in range(1000):
        a = r.uniform(-100, 100)
        b = a + 10 ** r.uniform(-2, 3)
        eps = 10 ** r.uniform(-9, 0)
        jumps = np.sort(r.uniform(a, b, size=r.integers(1, 6)))
        levels = np.cumsum(r.uniform(0.5, 2.0, size=jumps.size + 1))
        zero_at = r.integers(0, jumps.size)
        offset = 0.5 * (levels[zero_at] + levels[zero_at + 1])
        sign = 1 if r.random() < 0.5 else -1
        f = lambda t, jumps=jumps, levels=levels, offset=offset, sign=sign: sign * (
            levels[np.searchsorted(jumps, t, side="right")] - offset
        )
        res = bisection(f, a, b, eps, full_output=True)
        bound = max_bisection_iterations(a, b, eps) + 1
        worst_excess = max(worst_excess, res.iterations - bound)
        worst_width = max(worst_width, (res.hi - res.lo) / eps)
        ok &= res.iterations <= bound and res.hi - res.lo <= eps
    _check(
        "6 bisection bound",
        ok,
        f"1000 step functions, max iterations - bound = {worst_excess}, max width/eps = {worst_width:.3f}",
    )


def test_7_computational_claim():
    full = synth_dataset(n=51, p=5, q=2, seed=7)
    data, x_new, _ = full.split_out(0)
    w = ConformityMeasure.l1()
    exact_pred = make_predictor("ridge", lam=1.0)
    constructions.reset()
    ex = ExactConformal(hats_for(exact_pred, data, x_new), data, w)
    queries = data.responses.mean(axis=0) + 20 * np.random.default_rng(7).standard_normal((10_000, 2))
    ex.pvalue_counts(queries)
    hats_built = constructions.count
    train_once = hats_built == 1 and exact_pred.fits == 0 and ex.queries == 10_000

    spec = GridSpec.around(data.responses, 50)
    bb = make_predictor("ridge", lam=1.0)
    t0 = time.perf_counter()
    slow = grid_region(bb, data, x_new, 0.1, spec, w, fast=False)
    t_grid = time.perf_counter() - t0
    fast_pred = make_predictor("ridge", lam=1.0)
    t0 = time.perf_counter()
    fast = grid_region(fast_pred, data, x_new, 0.1, spec, w, fast=True)
    t_exact = time.perf_counter() - t0
    ok = train_once and bb.fits == 2500 and slow.fits == 2500 and t_exact < t_grid
    ok &= bool(np.array_equal(slow.mask, fast.mask))
    _check(
        "7 computational claim",
        ok,
        f"hat constructions {hats_built} for 10000 queries, black-box refits {bb.fits} for 2500 points, "
        f"exact {1000 * t_exact:.1f}ms < grid {1000 * t_grid:.1f}ms",
    )


PROTOCOL_METHODS = ("rootcp_ellipse", "rootcp_hull", "split", "oracle_cp")


def _protocol_run(out):
    cfg = {
        "data": {"synthetic": PAPER_SYNTH},
        "predictor": "ridge",
        "measure": "wnorm",
        "alpha": 0.1,
        "repetitions": 100,
        "seed": 0,
        "split_frac": 0.3,
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    code = main(["run", str(path), "--method", ",".join(PROTOCOL_METHODS), "--reps", "100", "--out", str(out)])
    return code


@pytest.fixture(scope="module")
def protocol_dirs():
    base = _artifacts("protocol")
    start = time.perf_counter()
    code = _protocol_run(base / "run1")
    elapsed = time.perf_counter() - start
    return base, code, elapsed


def test_8_protocol_reproduction(protocol_dirs):
    base, code, elapsed = protocol_dirs
    with open(base / "run1" / "benchmark.csv") as fh:
        table = {row["method"]: row for row in csv.DictReader(fh)}
    covs = {m: float(table[m]["coverage"]) for m in PROTOCOL_METHODS if m in table}
    ok = code == 0 and len(covs) == 4 and all(0.80 <= c <= 1.0 for c in covs.values()) and elapsed < 600
    ok &= all(table[m]["mean_normalized_time"] != "" for m in covs)
    detail = ", ".join(
        f"{m}: cov {covs[m]:.2f} vol {float(table[m]['mean_volume']):.4g} T {float(table[m]['mean_normalized_time']):.2f}"
        for m in covs
    )
    _check("8 protocol reproduction", ok, f"{detail}; {elapsed:.1f}s (< 600s)")


def _strip_timing(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    drop = {i for i, h in enumerate(header) if h in TIMING_COLUMNS}
    return [[c for i, c in enumerate(row) if i not in drop] for row in rows]


def test_9_determinism(protocol_dirs):
    base, _, _ = protocol_dirs
    code = _protocol_run(base / "run2")
    names = [f"report_{m}.csv" for m in PROTOCOL_METHODS] + ["benchmark.csv"]
    same = [_strip_timing(base / "run1" / n) == _strip_timing(base / "run2" / n) for n in names]
    # the smart-union calibration run, shortened, exercises the Monte Carlo paths too
    union_paths = []
    for tag in ("a", "b"):
        rep = run_experiment(_calibration_config("exact_union_smart", repetitions=40))
        p = _artifacts("determinism") / f"smart_union_{tag}.csv"
        emit_report(rep, "csv", p)
        union_paths.append(p)
    same.append(_strip_timing(union_paths[0]) == _strip_timing(union_paths[1]))
    ok = code == 0 and all(same)
    _check("9 determinism", ok, f"{sum(same)}/{len(same)} CSV reports identical modulo {', '.join(TIMING_COLUMNS)}")
