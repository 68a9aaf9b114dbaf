"""Convex approximations of a point cloud: 2-D hull, least-squares ellipse, MVEE."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import NumericalError


def ball_volume(q: int) -> float:
    """Volume of the unit ball in R^q."""
    return math.pi ** (q / 2) / math.gamma(q / 2 + 1)


def ellipsoid_volume(shape) -> float:
    """Volume of {z : (z-c)' M (z-c) <= 1}."""
    m = np.atleast_2d(shape)
    return ball_volume(m.shape[0]) / math.sqrt(np.linalg.det(m))


@dataclass(frozen=True)
class ConvexApprox:
    """Either an ellipsoid {(z-c)'M(z-c) <= 1} or a counterclockwise 2-D hull."""

    kind: str
    center: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None
    hull: Optional[np.ndarray] = None

    def contains(self, z, tol: float = 0.0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "ellipsoid":
            d = z - self.center
            return np.einsum("...k,kl,...l->...", d, self.shape, d) <= 1.0 + tol
        return in_convex_polygon(self.hull, z, tol)

    def volume(self) -> float:
        if self.kind == "ellipsoid":
            return ellipsoid_volume(self.shape)
        return polygon_area(self.hull)

    def to_dict(self) -> dict:
        if self.kind == "ellipsoid":
            return {"kind": "ellipsoid", "center": self.center.tolist(), "shape": self.shape.tolist()}
        return {"kind": "hull2d", "vertices": self.hull.tolist()}


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Counterclockwise hull vertices (monotone chain); collinear points are dropped."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if pts.shape[0] < 3:
        raise NumericalError("convex hull needs at least three distinct points")
    scale = max(np.ptp(pts, axis=0).max(), np.finfo(float).tiny)
    tol = 1e-12 * scale * scale
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= tol:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise NumericalError("points are collinear; hull is degenerate")
    return hull


def polygon_area(vertices) -> float:
    """Shoelace area; positive for counterclockwise vertices."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def in_convex_polygon(vertices, z, tol: float = 0.0) -> np.ndarray:
    """Point-in-polygon for a counterclockwise convex polygon; boundary counts as inside."""
    v = np.asarray(vertices, dtype=float)
    z = np.asarray(z, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    rel = z[..., None, :] - v
    cross = e[:, 0] * rel[..., 1] - e[:, 1] * rel[..., 0]
    scale = max(np.ptp(v, axis=0).max(), np.finfo(float).tiny)
    return np.all(cross >= -tol * scale * scale, axis=-1)


def _conic_to_ellipse(coef):
    a, b, c, d, e, f = coef
    quad = np.array([[a, b / 2], [b / 2, c]])
    if 4 * a * c - b * b <= 0:
        raise NumericalError("least-squares conic is not an ellipse")
    center = np.linalg.solve(2 * quad, [-d, -e])
    f0 = f + 0.5 * (d * center[0] + e * center[1])
    shape = quad / -f0
    if np.linalg.eigvalsh(shape).min() <= 0:
        raise NumericalError("least-squares conic is not an ellipse")
    return center, 0.5 * (shape + shape.T)


def fit_ellipse_2d(points):
    """Direct least-squares ellipse (constrained conic fit, numerically stable form).

    Points are centered and scaled before fitting. Returns (center, M).
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 5:
        raise NumericalError("ellipse fit needs at least 5 points")
    mu = pts.mean(axis=0)
    sd = np.abs(pts - mu).max()
    if sd == 0:
        raise NumericalError("degenerate point set")
    u = (pts - mu) / sd
    x, y = u[:, 0], u[:, 1]
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1, s2, s3 = d1.T @ d1, d1.T @ d2, d2.T @ d2
    if np.linalg.cond(s3) > 1e13:
        raise NumericalError("degenerate point set (rank-deficient design)")
    t = -np.linalg.solve(s3, s2.T)
    m = s1 + s2 @ t
    m = np.array([m[2] / 2, -m[1], m[0] / 2])
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.nonzero(cond > 0)[0]
    if ok.size == 0:
        raise NumericalError("no elliptic solution for this point set")
    a1 = evecs[:, ok[np.argmin(np.abs(np.real(evals[ok])))]]
    coef = np.concatenate([a1, t @ a1])
    center, shape = _conic_to_ellipse(coef)
    return mu + sd * center, shape / (sd * sd)


def mvee(points, tol: float = 1e-7, max_iter: int = 100000):
    """Minimum-volume enclosing ellipsoid by Khachiyan's barycentric coordinate ascent.

    Returns (center, M) with every point satisfying (p-c)'M(p-c) <= 1 + O(tol).
    """
    pts = np.asarray(points, dtype=float)
    m, q = pts.shape
    if m < q + 1:
        raise NumericalError(f"MVEE in {q} dimensions needs at least {q + 1} points")
    lifted = np.hstack([pts, np.ones((m, 1))]).T
    if np.linalg.matrix_rank(lifted) < q + 1:
        raise NumericalError("points are not affinely independent")
    u = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        x = lifted @ (u[:, None] * lifted.T)
        g = np.einsum("ij,ji->i", lifted.T, np.linalg.solve(x, lifted))
        j = int(np.argmax(g))
        gmax = g[j]
        step = (gmax - q - 1) / ((q + 1) * (gmax - 1))
        new_u = (1 - step) * u
        new_u[j] += step
        if np.linalg.norm(new_u - u) < tol:
            u = new_u
            break
        u = new_u
    center = pts.T @ u
    cov = pts.T @ (u[:, None] * pts) - np.outer(center, center)
    shape = np.linalg.inv(cov) / q
    # exact containment: rescale so the farthest point is on the surface
    d = pts - center
    worst = np.einsum("ij,jk,ik->i", d, shape, d).max()
    if worst > 1:
        shape = shape / worst
    return center, 0.5 * (shape + shape.T)


def fit_ellipsoid(points) -> ConvexApprox:
    """Least-squares ellipse for q = 2, MVEE for q > 2, enclosing interval for q = 1."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise NumericalError("points must be an (m, q) array")
    q = pts.shape[1]
    if q == 1:
        lo, hi = pts.min(), pts.max()
        if hi <= lo:
            raise NumericalError("degenerate interval")
        half = 0.5 * (hi - lo)
        center, shape = np.array([0.5 * (lo + hi)]), np.array([[1.0 / half**2]])
    elif q == 2:
        center, shape = fit_ellipse_2d(pts)
    else:
        center, shape = mvee(pts)
    return ConvexApprox("ellipsoid", center=center, shape=shape)


def fit_hull(points) -> ConvexApprox:
    return ConvexApprox("hull2d", hull=convex_hull_2d(points))
