"""Boundary search along rays from a conforming center, then a convex fit.

For a black-box predictor every evaluation of the directional function costs
one refit on the augmented data.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import (
    AugmentedProblem,
    ConfigError,
    ConformityMeasure,
    Dataset,
    NumericalError,
    rank_of_last,
    region_membership_threshold,
)
from .geometry import ConvexApprox, fit_ellipsoid, fit_hull
from .predictors import PredictorFailure, PredictorSpec

T_CAP_FACTOR = 50.0


class BracketError(NumericalError):
    pass


@dataclass(frozen=True)
class BisectionResult:
    root: float
    lo: float
    hi: float
    iterations: int
    converged: bool


def max_bisection_iterations(a: float, b: float, eps: float) -> int:
    return max(0, math.ceil(math.log2((b - a) / eps)))


def bisection(
    f: Callable[[float], float],
    a: float,
    b: float,
    eps: float,
    full_output: bool = False,
    fa: Optional[float] = None,
    fb: Optional[float] = None,
):
    """Locate a sign change of ``f`` in [a, b] to within ``eps``.

    ``sign(0)`` is its own class: a zero at an endpoint or midpoint is
    returned immediately. Returns the midpoint of the final bracket, whose
    width is <= eps, after at most ceil(log2((b - a) / eps)) halvings.
    Known endpoint values may be passed as ``fa``/``fb`` to save evaluations.
    """
    if not a < b:
        raise ConfigError("bisection needs a < b")
    if eps <= 0:
        raise ConfigError("eps must be positive")
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    if fa == 0 or fb == 0:
        r = a if fa == 0 else b
        res = BisectionResult(r, r, r, 0, True)
        return res if full_output else r
    if np.sign(fa) == np.sign(fb):
        raise BracketError(f"no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")
    it = 0
    budget = max_bisection_iterations(a, b, eps)
    while b - a > eps and it < budget + 1:
        c = 0.5 * (a + b)
        fc = f(c)
        it += 1
        if fc == 0:
            res = BisectionResult(c, c, c, it, True)
            return res if full_output else c
        if np.sign(fc) == np.sign(fa):
            a, fa = c, fc
        else:
            b = c
    res = BisectionResult(0.5 * (a + b), a, b, it, b - a <= eps)
    return res if full_output else res.root


def center_point(predictor: PredictorSpec, data: Dataset, x_new) -> np.ndarray:
    """Prediction at x_new from a fit on D_n only."""
    try:
        yhat = predictor.fit(AugmentedProblem(data, x_new))
    except PredictorFailure as exc:
        raise PredictorFailure(f"center fit on D_n failed: {exc}") from exc
    return yhat[-1].copy()


def directional_g(predictor, data, x_new, z0, d, alpha, measure: ConformityMeasure):
    """g(t) = ceil((1-alpha)(n+1)) - rank(z0 + t d); g >= 0 exactly on the region.

    Integer valued, so it is a step function of t.
    """
    threshold = region_membership_threshold(data.n, alpha)
    z0 = np.asarray(z0, dtype=float)
    d = np.asarray(d, dtype=float)

    def g(t: float) -> int:
        z = z0 + t * d
        problem = AugmentedProblem(data, x_new, z)
        try:
            yhat = predictor.fit(problem)
        except PredictorFailure as exc:
            raise PredictorFailure(f"refit at t = {t} failed: {exc}") from exc
        return threshold - rank_of_last(measure(problem.y_aug - yhat))

    return g


def rank_g(rank_fn, n: int, alpha: float, z0, d):
    """Same as :func:`directional_g` for any callable z -> (n+1) pi(z)."""
    threshold = region_membership_threshold(n, alpha)
    z0 = np.asarray(z0, dtype=float)
    d = np.asarray(d, dtype=float)
    return lambda t: threshold - int(rank_fn(z0 + t * d))


@dataclass(frozen=True)
class Bracket:
    inside: float
    outside: Optional[float]
    last_inside: float
    expansions: int
    g_outside: Optional[int] = None

    @property
    def found(self) -> bool:
        return self.outside is not None


def _expand(g, sign: int, scale: float, t_cap: float) -> Bracket:
    t = scale
    last_inside = 0.0
    k = 0
    while t <= t_cap:
        k += 1
        value = g(sign * t)
        if value < 0:
            return Bracket(0.0, sign * t, sign * last_inside, k, value)
        last_inside = t
        t *= 2.0
    return Bracket(0.0, None, sign * last_inside, k, None)


def bracket(g, t_cap: float, scale: float = 1.0):
    """Doubling search for the first nonconforming t on each side of 0.

    Returns (lower, upper) :class:`Bracket` objects; a side without a sign
    change before ``t_cap`` has ``outside = None`` (unbounded direction).
    """
    if t_cap <= 0 or scale <= 0:
        raise ConfigError("t_cap and scale must be positive")
    if g(0.0) < 0:
        raise NumericalError("g(0) < 0: the center point is not conforming")
    return _expand(g, -1, scale, t_cap), _expand(g, 1, scale, t_cap)


def search_directions(K: int, q: int, seed: int = 0) -> np.ndarray:
    """Equiangular directions for q = 2, normalized Gaussian draws otherwise."""
    if K < q + 1:
        raise ConfigError(f"need K >= q + 1 = {q + 1} directions, got {K}")
    if q == 1:
        return np.array([[1.0] if k % 2 == 0 else [-1.0] for k in range(K)])
    if q == 2:
        ang = 2 * np.pi * np.arange(K) / K
        d = np.column_stack([np.cos(ang), np.sin(ang)])
        d[np.abs(d) < 1e-15] = 0.0
        return d / np.linalg.norm(d, axis=1, keepdims=True)
    g = np.random.default_rng(seed).standard_normal((K, q))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


HULL_DIRECTIONS = 30


def default_directions(q: int, kind: str = "ellipsoid") -> int:
    """A few directions per dimension suffice for an ellipse; a hull needs many more."""
    if kind == "hull2d":
        return HULL_DIRECTIONS
    return max(2 * q + 2, 8)


@dataclass(frozen=True)
class BoundaryPoint:
    direction: np.ndarray
    t: float
    z: np.ndarray
    side: str
    residual: float
    iterations: int
    multiple_crossings: bool = False


@dataclass
class RootCPResult:
    points: List[BoundaryPoint]
    approx: Optional[ConvexApprox]
    z0: np.ndarray
    fits: int
    unbounded: list = field(default_factory=list)
    star_violations: list = field(default_factory=list)

    def boundary_array(self) -> np.ndarray:
        return np.array([p.z for p in self.points])


def _search_direction(g, g0, d, z0, scale, eps, t_cap):
    lower, upper = _expand(g, -1, scale, t_cap), _expand(g, 1, scale, t_cap)
    out, unbounded = [], []
    # g is integer valued, so the shifted indicator is never zero
    f = lambda t: g(t) + 0.5
    for side, br in (("lower", lower), ("upper", upper)):
        if not br.found:
            unbounded.append((tuple(d), side))
            continue
        fin, fout = g0 + 0.5, br.g_outside + 0.5
        if br.outside < 0:
            res = bisection(f, br.outside, 0.0, eps, full_output=True, fa=fout, fb=fin)
        else:
            res = bisection(f, 0.0, br.outside, eps, full_output=True, fa=fin, fb=fout)
        multi = abs(res.root) < abs(br.last_inside)
        out.append(
            BoundaryPoint(
                direction=d,
                t=res.root,
                z=z0 + res.root * d,
                side=side,
                residual=res.hi - res.lo,
                iterations=res.iterations,
                multiple_crossings=multi,
            )
        )
    return out, unbounded


def ray_scale(responses, d) -> float:
    spread = np.std(np.atleast_2d(responses), axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    return float(np.linalg.norm(spread * d))


def rootcp_from_rank(
    rank_fn,
    n: int,
    responses,
    z0,
    alpha: float,
    K: int,
    eps: float,
    kind: str = "ellipsoid",
    seed: int = 0,
    workers: int = 1,
    fit_counter=None,
) -> RootCPResult:
    """rootCP driven by any rank function z -> (n+1) pi(z)."""
    if kind not in ("ellipsoid", "hull2d", "none"):
        raise ConfigError(f"unknown convex approximation {kind!r}")
    z0 = np.asarray(z0, dtype=float)
    q = z0.size
    if kind == "hull2d" and q != 2:
        raise ConfigError("convex hull approximation needs q = 2")
    threshold = region_membership_threshold(n, alpha)
    g0 = threshold - int(rank_fn(z0))
    if g0 < 0:
        raise NumericalError(
            "center point z0 is not conforming at this level; use a larger alpha or a different center model"
        )
    dirs = search_directions(K, q, seed)

    def one(d):
        g = rank_g(rank_fn, n, alpha, z0, d)
        scale = ray_scale(responses, d)
        return _search_direction(g, g0, d, z0, scale, eps, T_CAP_FACTOR * scale)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, dirs))
    else:
        results = [one(d) for d in dirs]
    points, unbounded = [], []
    for pts, unb in results:
        points.extend(pts)
        unbounded.extend(unb)
    star = [(tuple(p.direction), p.side) for p in points if p.multiple_crossings]
    approx = None
    if kind != "none":
        if len(points) < q + 1:
            raise NumericalError(f"only {len(points)} boundary points; cannot fit a {q}-D set")
        arr = np.array([p.z for p in points])
        approx = fit_ellipsoid(arr) if kind == "ellipsoid" else fit_hull(arr)
    fits = fit_counter() if fit_counter else 0
    return RootCPResult(points, approx, z0, fits, unbounded, star)


def rootcp_region(
    predictor: PredictorSpec,
    data: Dataset,
    x_new,
    alpha: float,
    K: Optional[int] = None,
    eps: float = 1e-4,
    kind: str = "ellipsoid",
    measure: Optional[ConformityMeasure] = None,
    seed: int = 0,
    workers: int = 1,
) -> RootCPResult:
    """Boundary points on K rays through z0 = mu_0(x_new) and a convex fit through them.

    ``fits`` in the result counts every model fit, the center fit included.
    """
    measure = measure or ConformityMeasure.l1()
    K = K or default_directions(data.q, kind)
    if workers > 1 and not predictor.reentrant:
        workers = 1
    start = predictor.fits
    z0 = center_point(predictor, data, x_new)

    def rank_fn(z):
        problem = AugmentedProblem(data, x_new, z)
        try:
            yhat = predictor.fit(problem)
        except PredictorFailure as exc:
            raise PredictorFailure(f"refit at z = {np.asarray(z).tolist()} failed: {exc}") from exc
        return rank_of_last(measure(problem.y_aug - yhat))

    return rootcp_from_rank(
        rank_fn,
        data.n,
        data.responses,
        z0,
        alpha,
        K,
        eps,
        kind,
        seed,
        workers,
        fit_counter=lambda: predictor.fits - start,
    )
