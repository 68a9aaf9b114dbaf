"""Experiment runner: hold out one tuple per repetition, build a region, score it.

Methods
-------
exact_union_smart, exact_union_random
    Unions of closed-form regions E_i (hat-matrix predictors only).
rootcp_ellipse, rootcp_hull
    Boundary search with refits, then an ellipse (or hull, q = 2).
grid
    Full conformal p-values on a grid.
split
    Split conformal with a scalar score, giving a ball in the chosen norm.
oracle_cp
    One fit on the data augmented with the true held-out response, then the
    same boundary search; its mean wall time normalizes all other timings.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import hat as hatmod
from .core import (
    AugmentedProblem,
    ConfigError,
    ConformalError,
    ConformityMeasure,
    Dataset,
    check_alpha,
    region_membership_threshold,
)
from .data import load_csv, synth_dataset
from .exact import ExactConformal, estimate_w, inverse_covariance
from .geometry import ellipsoid_volume
from .oracle import GridSpec, grid_region
from .predictors import PredictorSpec, hats_for, insample_hats, make_predictor
from .rootcp import default_directions, rootcp_from_rank, rootcp_region
from .union import Box, random_union, region_volume, smart_union, union_volume

METHODS = (
    "exact_union_smart",
    "exact_union_random",
    "rootcp_ellipse",
    "rootcp_hull",
    "grid",
    "split",
    "oracle_cp",
)
EXACT_METHODS = ("exact_union_smart", "exact_union_random")


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synthetic": {}})
    predictor: str = "ridge"
    predictor_params: dict = field(default_factory=dict)
    measure: str = "wnorm"
    method: str = "rootcp_ellipse"
    alpha: float = 0.1
    repetitions: int = 100
    seed: int = 0
    K: Optional[int] = None
    eps: float = 1e-4
    grid_points: int = 50
    grid_fast: bool = True
    split_frac: float = 0.5
    k_regions: Optional[int] = None
    mc_samples: int = 100_000
    box_expand: float = 0.5
    fresh_data: bool = False
    oracle_reference: bool = True

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        check_alpha(self.alpha)
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.measure not in ("l1", "wnorm"):
            raise ConfigError("measure must be 'l1' or 'wnorm'")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if not 0 < self.split_frac < 1:
            raise ConfigError("split_frac must lie in (0, 1)")
        if self.fresh_data and "synthetic" not in self.data:
            raise ConfigError("fresh_data needs a synthetic data source")
        if "synthetic" not in self.data and "csv" not in self.data:
            raise ConfigError("data must have a 'synthetic' or 'csv' entry")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunRecord:
    repetition: int
    held_out: int
    covered: bool
    volume: float
    wall_time: float
    fits_performed: int
    oracle_wall_time: Optional[float] = None
    failed: bool = False
    error: str = ""


@dataclass
class Report:
    config: dict
    coverage: float
    mean_volume: Optional[float]
    n_infinite: int
    n_failed: int
    mean_wall_time: float
    mean_normalized_time: Optional[float]
    runs: List[RunRecord]


def load_dataset(cfg: ExperimentConfig, seed: Optional[int] = None) -> Dataset:
    src = cfg.data
    if "synthetic" in src:
        params = dict(src["synthetic"])
        params.setdefault("seed", cfg.seed if seed is None else seed)
        if seed is not None:
            params["seed"] = seed
        return synth_dataset(**params)
    return load_csv(src["csv"], src["covariates"], src["responses"])


def estimate_measure(kind: str, predictor: PredictorSpec, data: Dataset) -> ConformityMeasure:
    """L1, or the inverse residual covariance of the predictor fitted on D_n."""
    if kind == "l1":
        return ConformityMeasure.l1()
    if predictor.is_hat:
        return estimate_w(data, insample_hats(predictor, data)).measure()
    resid = data.responses - predictor.predict(data.covariates, data.responses, data.covariates)
    return inverse_covariance(resid).measure()


@dataclass(frozen=True)
class SplitRegion:
    """{z : score(z - center) <= radius} from a split-conformal quantile."""

    center: np.ndarray
    radius: float
    measure: ConformityMeasure

    def contains(self, z) -> bool:
        return bool(self.measure(np.asarray(z, dtype=float) - self.center) <= self.radius)

    def interval(self):
        if self.center.size != 1 or self.measure.kind != "l1":
            raise ConfigError("interval form exists only for q = 1 with the L1 measure")
        c = float(self.center[0])
        return c - self.radius, c + self.radius

    def volume(self) -> float:
        q = self.center.size
        if math.isinf(self.radius):
            return math.inf
        if self.measure.kind == "l1":
            return (2 * self.radius) ** q / math.factorial(q)
        if self.radius <= 0:
            return 0.0
        if np.linalg.eigvalsh(self.measure.w).min() <= 0:
            return math.inf
        return ellipsoid_volume(self.measure.w / self.radius)


def split_conformal(
    data: Dataset,
    x_new,
    alpha: float,
    split_frac: float,
    predictor: PredictorSpec,
    measure: Union[ConformityMeasure, str] = "l1",
    seed: int = 0,
) -> SplitRegion:
    """Train on a random ``split_frac`` share of D_n, calibrate on the rest.

    ``measure="wnorm"`` estimates W from the training half's residuals only.
    """
    alpha = check_alpha(alpha)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_train = int(round(split_frac * data.n))
    n_cal = data.n - n_train
    if n_train < 1:
        raise ConfigError("training split is empty")
    idx = math.ceil(round((n_cal + 1) * (1 - alpha), 9))
    train, cal = data.take(perm[:n_train]), data.take(perm[n_train:])
    if isinstance(measure, str):
        if measure == "wnorm":
            measure = estimate_measure("wnorm", predictor, train)
        else:
            measure = ConformityMeasure(measure)
    x_query = np.vstack([cal.covariates, np.atleast_1d(x_new)[None, :]])
    yhat = predictor.predict(train.covariates, train.responses, x_query)
    scores = np.sort(measure(cal.responses - yhat[:-1]))
    # too few calibration scores for the level: the quantile is +inf (whole space)
    radius = float(scores[idx - 1]) if idx <= n_cal else math.inf
    return SplitRegion(yhat[-1].copy(), radius, measure)


def oracle_cp(
    predictor: PredictorSpec,
    data: Dataset,
    x_new,
    y_true,
    alpha: float,
    measure: ConformityMeasure,
    K: int,
    eps: float,
    kind: str = "ellipsoid",
    seed: int = 0,
):
    """Region from one fit on D_{n+1}(y_true); only the candidate's score moves with z."""
    problem = AugmentedProblem(data, x_new, y_true)
    yhat = predictor.fit(problem)
    train_scores = measure(data.responses - yhat[:-1])
    center = yhat[-1].copy()

    def rank_fn(z):
        s_new = measure(np.asarray(z, dtype=float) - center)
        return 1 + int(np.count_nonzero(train_scores <= s_new))

    return rootcp_from_rank(rank_fn, data.n, data.responses, center, alpha, K, eps, kind, seed)


def _one_repetition(cfg: ExperimentConfig, rep: int, rep_seed: int, full: Optional[Dataset]) -> RunRecord:
    rng = np.random.default_rng(rep_seed)
    data_seed = int(rng.integers(2**31))
    method_seed = int(rng.integers(2**31))
    full = load_dataset(cfg, seed=data_seed) if full is None else full
    held = int(rng.integers(full.n))
    data, x_new, y_new = full.split_out(held)
    predictor = make_predictor(cfg.predictor, **cfg.predictor_params)
    kind = "hull2d" if cfg.method == "rootcp_hull" else "ellipsoid"
    K = cfg.K or default_directions(data.q, kind)

    hats_before = hatmod.constructions.count
    t0 = time.perf_counter()
    measure = estimate_measure(cfg.measure, predictor, data)
    m = cfg.method
    # each branch sets covered and a volume thunk; volumes are metrics and stay off the clock
    if m in EXACT_METHODS:
        ex = ExactConformal(hats_for(predictor, data, x_new), data, measure)
        regions = ex.regions()
        box = Box.around(data.responses, cfg.box_expand)
        vols = [region_volume(r, box, cfg.mc_samples, method_seed + i) for i, r in enumerate(regions)]
        if m == "exact_union_smart":
            union = smart_union(regions, cfg.alpha, vols)
        else:
            k = cfg.k_regions or region_membership_threshold(data.n, cfg.alpha)
            union = random_union(regions, k, method_seed)
        covered = union.contains(y_new)
        volume_of = lambda: union_volume(union, box, vols, cfg.mc_samples, method_seed).value
    elif m in ("rootcp_ellipse", "rootcp_hull"):
        res = rootcp_region(predictor, data, x_new, cfg.alpha, K, cfg.eps, kind, measure, method_seed)
        covered = bool(res.approx.contains(y_new))
        volume_of = res.approx.volume
    elif m == "grid":
        spec = GridSpec.around(data.responses, cfg.grid_points, cfg.box_expand)
        grid = grid_region(predictor, data, x_new, cfg.alpha, spec, measure, fast=cfg.grid_fast)
        covered = grid.contains(y_new)
        volume_of = lambda: grid.area
    elif m == "split":
        meas = measure if cfg.measure == "l1" else "wnorm"
        region = split_conformal(data, x_new, cfg.alpha, cfg.split_frac, predictor, meas, method_seed)
        covered = region.contains(y_new)
        volume_of = region.volume
    else:
        res = oracle_cp(predictor, data, x_new, y_new, cfg.alpha, measure, K, cfg.eps, seed=method_seed)
        covered = bool(res.approx.contains(y_new))
        volume_of = res.approx.volume
    wall = time.perf_counter() - t0
    fits = predictor.fits + hatmod.constructions.count - hats_before
    volume = volume_of()

    oracle_wall = None
    if cfg.oracle_reference:
        if m == "oracle_cp":
            oracle_wall = wall
        else:
            ref = make_predictor(cfg.predictor, **cfg.predictor_params)
            t1 = time.perf_counter()
            try:
                ref_measure = estimate_measure(cfg.measure, ref, data)
                oracle_cp(ref, data, x_new, y_new, cfg.alpha, ref_measure, K, cfg.eps, seed=method_seed)
                oracle_wall = time.perf_counter() - t1
            except ConformalError:
                # timing reference only; the run itself succeeded
                oracle_wall = None
    return RunRecord(rep, held, bool(covered), float(volume), wall, int(fits), oracle_wall)


def run_experiment(cfg: ExperimentConfig, progress=None) -> Report:
    cfg.validate()
    if cfg.method in EXACT_METHODS:
        probe = make_predictor(cfg.predictor, **cfg.predictor_params)
        if not probe.is_hat:
            raise ConfigError(f"{cfg.method} needs a hat-matrix predictor, not {cfg.predictor}")
    full = None if cfg.fresh_data else load_dataset(cfg)
    if full is not None and full.n < 2:
        raise ConfigError("need at least two rows to hold one out")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.repetitions)
    runs = []
    for rep in range(cfg.repetitions):
        try:
            rec = _one_repetition(cfg, rep, int(seeds[rep]), full)
        except (ConformalError, np.linalg.LinAlgError) as exc:
            rec = RunRecord(rep, -1, False, math.nan, 0.0, 0, None, True, f"{type(exc).__name__}: {exc}")
        runs.append(rec)
        if progress:
            progress(rec)
    return summarize(cfg, runs)


def summarize(cfg: ExperimentConfig, runs: List[RunRecord]) -> Report:
    runs = sorted(runs, key=lambda r: r.repetition)
    ok = [r for r in runs if not r.failed]
    finite = [r.volume for r in ok if math.isfinite(r.volume)]
    n_inf = sum(1 for r in ok if math.isinf(r.volume))
    covered = sum(1 for r in runs if r.covered)
    mean_wall = float(np.mean([r.wall_time for r in ok])) if ok else 0.0
    oracle = [r.oracle_wall_time for r in ok if r.oracle_wall_time is not None]
    norm = mean_wall / float(np.mean(oracle)) if oracle and np.mean(oracle) > 0 else None
    return Report(
        config=cfg.to_dict(),
        coverage=covered / len(runs),
        mean_volume=float(np.mean(finite)) if finite else None,
        n_infinite=n_inf,
        n_failed=len(runs) - len(ok),
        mean_wall_time=mean_wall,
        mean_normalized_time=norm,
        runs=runs,
    )
