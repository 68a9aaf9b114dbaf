"""Brute-force references: refit-per-candidate scores and grid conformal regions."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    AugmentedProblem,
    ConfigError,
    ConformityMeasure,
    Dataset,
    ScoreVector,
    rank_of_last,
    region_membership_threshold,
)
from .exact import ExactConformal
from .predictors import PredictorSpec, hats_for

GRID_CAP = 250_000


@dataclass(frozen=True)
class GridSpec:
    lower: np.ndarray
    upper: np.ndarray
    points_per_dim: int

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ConfigError("grid needs lower < upper componentwise")
        if self.points_per_dim < 2:
            raise ConfigError("points_per_dim must be >= 2")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def q(self) -> int:
        return self.lower.size

    @property
    def size(self) -> int:
        return self.points_per_dim**self.q

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (self.points_per_dim - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [np.linspace(lo, hi, self.points_per_dim) for lo, hi in zip(self.lower, self.upper)]

    def points(self) -> np.ndarray:
        """Grid points in C order (last coordinate fastest), shape (size, q)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def nearest_index(self, z) -> tuple:
        """Multi-index of the grid point nearest to z, or None when z is off the grid."""
        z = np.asarray(z, dtype=float)
        half = 0.5 * self.spacing
        if np.any(z < self.lower - half) or np.any(z > self.upper + half):
            return None
        idx = np.rint((z - self.lower) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, self.points_per_dim - 1))

    @classmethod
    def around(cls, responses, points_per_dim: int, expand: float = 0.5) -> "GridSpec":
        y = np.atleast_2d(responses)
        lo, hi = y.min(axis=0), y.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return cls(lo - expand * span, hi + expand * span, points_per_dim)


@dataclass(frozen=True)
class GridRegion:
    """Ranks (n+1)*pi(z) and p-value counts over a grid, with the level-alpha mask."""

    spec: GridSpec
    ranks: np.ndarray
    pcounts: np.ndarray
    mask: np.ndarray
    n: int
    alpha: float
    fast_path: bool
    fits: int

    def pvalues(self) -> np.ndarray:
        """p-values as an object array of Fractions, grid-shaped."""
        return np.vectorize(lambda c: Fraction(int(c), self.n + 1), otypes=[object])(self.pcounts)

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.spec.cell_volume

    def contains(self, z) -> bool:
        idx = self.spec.nearest_index(z)
        return bool(idx is not None and self.mask[idx])

    def boundary_points(self) -> np.ndarray:
        """Centers of in-region cells that touch an out-of-region cell (q = 2)."""
        m = self.mask
        pad = np.pad(m, 1, constant_values=False)
        edge = m & ~(
            pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
        )
        pts = self.spec.points().reshape(m.shape + (self.spec.q,))
        return pts[edge]

    def to_csv(self, path):
        export_grid_csv(self.spec, self.pcounts, self.mask, self.n, path, ranks=self.ranks)


def refit_scores(predictor: PredictorSpec, data: Dataset, x_new, z, measure: ConformityMeasure) -> ScoreVector:
    """Fit once on D_{n+1}(z) and score all n+1 observations."""
    problem = AugmentedProblem(data, x_new, z)
    yhat = predictor.fit(problem)
    resid = problem.y_aug - yhat
    return ScoreVector(measure(resid), problem.z)


def refit_rank(predictor, data, x_new, z, measure) -> int:
    return rank_of_last(refit_scores(predictor, data, x_new, z, measure))


def grid_region(
    predictor: PredictorSpec,
    data: Dataset,
    x_new,
    alpha: float,
    grid: GridSpec,
    measure: ConformityMeasure,
    fast: bool = True,
    cap: int = GRID_CAP,
) -> GridRegion:
    """Full conformal region on a grid.

    With ``fast=True`` and a hat-matrix predictor the p-values come from the
    closed form (one hat construction); otherwise every grid point is refit.
    """
    if grid.q != data.q:
        raise ConfigError(f"grid has {grid.q} dimensions, responses have {data.q}")
    if grid.size > cap:
        raise ConfigError(f"grid of {grid.size} points exceeds the cap of {cap}")
    pts = grid.points()
    n = data.n
    threshold = region_membership_threshold(n, alpha)
    use_fast = fast and predictor.is_hat
    if use_fast:
        ex = ExactConformal(hats_for(predictor, data, x_new), data, measure)
        s = ex.scores(pts)
        ranks = np.count_nonzero(s <= s[:, -1:], axis=1)
        pcounts = np.count_nonzero(s[:, -1:] <= s[:, :-1], axis=1)
        fits = 0
    else:
        ranks = np.empty(len(pts), dtype=int)
        pcounts = np.empty(len(pts), dtype=int)
        for j, z in enumerate(pts):
            s = refit_scores(predictor, data, x_new, z, measure).scores
            ranks[j] = np.count_nonzero(s <= s[-1])
            pcounts[j] = np.count_nonzero(s[-1] <= s[:-1])
        fits = len(pts)
    shape = (grid.points_per_dim,) * grid.q
    ranks = ranks.reshape(shape)
    pcounts = pcounts.reshape(shape)
    return GridRegion(grid, ranks, pcounts, ranks <= threshold, n, alpha, use_fast, fits)


def export_grid_csv(spec: GridSpec, pcounts, mask, n: int, path, ranks=None):
    """CSV with columns z1..zq, pvalue, mask (and rank when given)."""
    pts = spec.points()
    pc = np.asarray(pcounts).ravel()
    mk = np.asarray(mask).ravel()
    rk = None if ranks is None else np.asarray(ranks).ravel()
    header = [f"z{k + 1}" for k in range(spec.q)] + ["pvalue", "mask"]
    if rk is not None:
        header.append("rank")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for j, z in enumerate(pts):
            row = [repr(float(v)) for v in z] + [repr(float(pc[j] / (n + 1))), int(mk[j])]
            if rk is not None:
                row.append(int(rk[j]))
            wr.writerow(row)
