"""Conservative prediction regions as unions of per-observation regions E_i."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, region_membership_threshold
from .exact import L1Region, QuadraticRegion
from .geometry import ball_volume

MIN_MC_SAMPLES = 1000


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or not np.all(hi - lo > 0):
            raise ConfigError("box needs positive side lengths")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def sample(self, rng, m: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((m, self.lower.size))

    def sample_faces(self, rng, m: int) -> np.ndarray:
        """Uniform points on randomly chosen faces of the box."""
        pts = self.sample(rng, m)
        q = self.lower.size
        dim = rng.integers(0, q, size=m)
        side = rng.integers(0, 2, size=m).astype(bool)
        rows = np.arange(m)
        pts[rows, dim] = np.where(side, self.upper[dim], self.lower[dim])
        return pts

    @classmethod
    def around(cls, responses, expand: float = 0.5) -> "Box":
        """Response range expanded by ``expand`` times the range on every side."""
        y = np.atleast_2d(responses)
        lo, hi = y.min(axis=0), y.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return cls(lo - expand * span, hi + expand * span)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    method: str
    mc_stderr: Optional[float] = None
    box: Optional[Box] = None

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def _l1_unbounded(region: L1Region) -> Optional[bool]:
    """True/False when the asymptotic slopes decide boundedness, None when they do not."""
    c, i = region.coeffs, region.obs_index
    slope = np.abs(c.b[-1]) - np.abs(c.b[i])
    if np.any(slope < 0):
        return True
    if np.all(slope > 0):
        return False
    return None


def region_volume(region, box: Box, mc_samples: int = 100_000, seed: int = 0) -> VolumeEstimate:
    """Closed form for bounded ellipsoids, Monte Carlo in ``box`` otherwise."""
    if mc_samples < MIN_MC_SAMPLES:
        raise ConfigError(f"mc_samples must be >= {MIN_MC_SAMPLES}")
    if not isinstance(box, Box):
        raise ConfigError("box must be a Box")
    unbounded_possible = True
    if isinstance(region, QuadraticRegion):
        lam = np.linalg.eigvalsh(region.qmat)
        if lam.min() < -1e-12 * max(np.abs(lam).max(), 1.0):
            # z'Qz -> -inf along a negative eigendirection
            return VolumeEstimate(math.inf, "monte_carlo", box=box)
        if lam.min() > 0:
            center = -0.5 * np.linalg.solve(region.qmat, region.lin)
            r2 = float(center @ region.qmat @ center - region.cst)
            if r2 <= 0:
                return VolumeEstimate(0.0, "closed_form_ellipsoid")
            vol = ball_volume(region.q) * r2 ** (region.q / 2) / math.sqrt(np.prod(lam))
            return VolumeEstimate(vol, "closed_form_ellipsoid")
    elif isinstance(region, L1Region):
        verdict = _l1_unbounded(region)
        if verdict:
            return VolumeEstimate(math.inf, "monte_carlo", box=box)
        unbounded_possible = verdict is None
    rng = np.random.default_rng(seed)
    if unbounded_possible:
        faces = box.sample_faces(rng, max(MIN_MC_SAMPLES, mc_samples // 10))
        if np.any(region.contains(faces)):
            return VolumeEstimate(math.inf, "monte_carlo", box=box)
    inside = np.count_nonzero(region.contains(box.sample(rng, mc_samples)))
    frac = inside / mc_samples
    stderr = box.volume * math.sqrt(frac * (1 - frac) / mc_samples)
    return VolumeEstimate(frac * box.volume, "monte_carlo", stderr, box)


@dataclass
class UnionRegion:
    """Union of selected E_i; covers with probability >= |members| / (n+1)."""

    regions: Sequence
    members: tuple
    n: int

    def __post_init__(self):
        if not 1 <= len(self.members) <= self.n:
            raise ConfigError("a union needs between 1 and n members")

    @property
    def coverage_bound(self) -> float:
        return len(self.members) / (self.n + 1)

    @property
    def alpha_nominal(self) -> float:
        return 1.0 - self.coverage_bound

    def contains(self, z) -> bool:
        return union_membership(self, z)

    def contains_many(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        out = np.zeros(z.shape[0], dtype=bool)
        for i in self.members:
            todo = ~out
            if not todo.any():
                break
            out[todo] = self.regions[i].contains(z[todo])
        return out

    def with_member(self, i: int) -> "UnionRegion":
        if i in self.members:
            return self
        return UnionRegion(self.regions, self.members + (i,), self.n)


def union_membership(u: UnionRegion, z) -> bool:
    z = np.asarray(z, dtype=float)
    for i in u.members:
        if u.regions[i].contains(z):
            return True
    return False


def smart_union(regions: Sequence, alpha: float, volumes: Sequence[VolumeEstimate]) -> UnionRegion:
    """The ceil((1-alpha)(n+1)) smallest regions by volume (index breaks ties)."""
    n = len(regions)
    if len(volumes) != n:
        raise ConfigError("volumes must align with regions")
    k = region_membership_threshold(n, alpha)
    if k > n:
        raise ConfigError(f"level 1 - {alpha} needs {k} regions but only {n} exist")
    order = sorted(range(n), key=lambda i: (volumes[i].value, i))
    return UnionRegion(regions, tuple(order[:k]), n)


def random_union(regions: Sequence, k: int, seed: int) -> UnionRegion:
    n = len(regions)
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    members = rng.choice(n, size=k, replace=False)
    return UnionRegion(regions, tuple(int(i) for i in members), n)


def union_volume(u: UnionRegion, box: Box, volumes=None, mc_samples: int = 100_000, seed: int = 0) -> VolumeEstimate:
    """Monte Carlo volume of the union inside ``box``; infinite if any member is."""
    if volumes is not None and any(volumes[i].infinite for i in u.members):
        return VolumeEstimate(math.inf, "monte_carlo", box=box)
    rng = np.random.default_rng(seed)
    inside = np.count_nonzero(u.contains_many(box.sample(rng, mc_samples)))
    frac = inside / mc_samples
    stderr = box.volume * math.sqrt(frac * (1 - frac) / mc_samples)
    return VolumeEstimate(frac * box.volume, "monte_carlo", stderr, box)


def rasterize(u: UnionRegion, lower, upper, points_per_dim: int) -> tuple:
    """(points, mask) of the union over a regular 2-D grid."""
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return pts, u.contains_many(pts)


def export_union_csv(u: UnionRegion, lower, upper, points_per_dim: int, path):
    """Grid CSV (z1..zq, value) where value is the number of member regions containing z."""
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    counts = np.zeros(len(pts), dtype=int)
    for i in u.members:
        counts += u.regions[i].contains(pts)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"z{k + 1}" for k in range(pts.shape[1])] + ["value"])
        for z, c in zip(pts, counts):
            wr.writerow([repr(float(v)) for v in z] + [int(c)])
