"""Closed-form conformity scores and exact p-values for hat-matrix predictors.

With ``yhat_k(z) = H_k (y_k, z)'`` the residual of observation i in response
dimension k is affine in the candidate: ``r_ki(z) = a_ki + b_ki z_k``. Everything
here is computed from the pair (a, b) after a single hat-matrix construction.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import List

import numpy as np

from .core import (
    ConfigError,
    ConformityMeasure,
    DataError,
    Dataset,
    NumericalError,
    pvalue_counts,
)
from .hat import HatSet

W_JITTER = 1e-8


@dataclass(frozen=True)
class AffineCoeffs:
    """Rows are observations 1..n+1, columns response dimensions."""

    a: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0] - 1

    @property
    def q(self) -> int:
        return self.a.shape[1]

    def residuals(self, z) -> np.ndarray:
        """Residuals of all n+1 observations at candidate(s) z: shape (..., n+1, q)."""
        z = np.asarray(z, dtype=float)
        return self.a + self.b * z[..., None, :]


def affine_coeffs(hats: HatSet, responses) -> AffineCoeffs:
    y = np.asarray(responses, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, q = y.shape
    if hats.q != q:
        raise DataError(f"hat set has {hats.q} matrices for {q} response dimensions")
    if hats.size != n + 1:
        raise DataError(f"hat matrices are {hats.size}x{hats.size}, expected {n + 1}")
    a = np.empty((n + 1, q))
    b = np.empty((n + 1, q))
    for k, h in enumerate(hats.mats):
        resid = np.eye(n + 1) - h
        a[:, k] = resid[:, :n] @ y[:, k]
        b[:, k] = resid[:, n]
    a.setflags(write=False)
    b.setflags(write=False)
    return AffineCoeffs(a, b)


def _check_measure(coeffs: AffineCoeffs, measure: ConformityMeasure):
    if measure.kind == "wnorm" and measure.q != coeffs.q:
        raise DataError(f"W is {measure.q}x{measure.q} but coefficients have q = {coeffs.q}")


def scores_closed(coeffs: AffineCoeffs, measure: ConformityMeasure, z) -> np.ndarray:
    """All n+1 scores at z; z may be a batch of shape (m, q) giving (m, n+1)."""
    _check_measure(coeffs, measure)
    return measure(coeffs.residuals(z))


def score_closed(coeffs: AffineCoeffs, measure: ConformityMeasure, i: int, z) -> float:
    """Score of observation ``i`` (0-based; ``i = n`` is the candidate point)."""
    if not 0 <= i <= coeffs.n:
        raise DataError(f"observation index {i} out of range [0, {coeffs.n}]")
    _check_measure(coeffs, measure)
    z = np.asarray(z, dtype=float)
    return float(measure(coeffs.a[i] + coeffs.b[i] * z))


def pvalue_exact(coeffs: AffineCoeffs, measure: ConformityMeasure, z) -> Fraction:
    s = scores_closed(coeffs, measure, np.atleast_2d(z))
    return Fraction(int(pvalue_counts(s)[0]), coeffs.n + 1)


class ExactConformal:
    """Exact p-values for one (dataset, x_new) after a single hat construction.

    ``hat_constructions`` stays at 1 however many candidates are queried.
    """

    def __init__(self, hats: HatSet, data: Dataset, measure: ConformityMeasure):
        self.hats = hats
        self.measure = measure
        self.coeffs = affine_coeffs(hats, data.responses)
        _check_measure(self.coeffs, measure)
        self.hat_constructions = 1
        self.queries = 0

    @property
    def n(self) -> int:
        return self.coeffs.n

    def scores(self, z) -> np.ndarray:
        return scores_closed(self.coeffs, self.measure, z)

    def pvalue_counts(self, z, chunk: int = 4096) -> np.ndarray:
        """(n+1) * p-value for each row of z."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.empty(z.shape[0], dtype=int)
        for start in range(0, z.shape[0], chunk):
            out[start : start + chunk] = pvalue_counts(self.scores(z[start : start + chunk]))
        self.queries += z.shape[0]
        return out

    def ranks(self, z, chunk: int = 4096) -> np.ndarray:
        """(n+1) * pi(z) for each row of z."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.empty(z.shape[0], dtype=int)
        for start in range(0, z.shape[0], chunk):
            s = self.scores(z[start : start + chunk])
            out[start : start + chunk] = np.count_nonzero(s <= s[:, -1:], axis=1)
        self.queries += z.shape[0]
        return out

    def pvalue(self, z) -> Fraction:
        return Fraction(int(self.pvalue_counts(z)[0]), self.n + 1)

    def regions(self) -> list:
        if self.measure.kind == "wnorm":
            return [region_wnorm(self.coeffs, self.measure.w, i) for i in range(self.n)]
        return [region_l1(self.coeffs, i) for i in range(self.n)]


@dataclass(frozen=True)
class QuadraticRegion:
    """{z : z' qmat z + lin' z + cst <= 0}."""

    qmat: np.ndarray
    lin: np.ndarray
    cst: float
    obs_index: int

    @property
    def q(self) -> int:
        return self.lin.size

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.einsum("...k,kl,...l->...", z, self.qmat, z) + z @ self.lin + self.cst

    def contains(self, z) -> np.ndarray:
        return self.value(z) <= 0

    def ellipsoid(self):
        """(center, shape M) with the region = {(z-c)'M(z-c) <= 1}, or None if not a bounded ellipsoid."""
        lam = np.linalg.eigvalsh(self.qmat)
        if lam.min() <= 0:
            return None
        center = -0.5 * np.linalg.solve(self.qmat, self.lin)
        r2 = float(center @ self.qmat @ center - self.cst)
        if r2 <= 0:
            return None
        return center, self.qmat / r2


@dataclass(frozen=True)
class L1Region:
    """{z : S_{n+1}(z) <= S_i(z)} under the L1 measure, kept as an exact predicate."""

    coeffs: AffineCoeffs
    obs_index: int

    @property
    def q(self) -> int:
        return self.coeffs.q

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        c, i = self.coeffs, self.obs_index
        s_new = np.abs(c.a[-1] + c.b[-1] * z).sum(axis=-1)
        s_i = np.abs(c.a[i] + c.b[i] * z).sum(axis=-1)
        return s_new - s_i

    def contains(self, z) -> np.ndarray:
        return self.value(z) <= 0


def region_wnorm(coeffs: AffineCoeffs, w, i: int) -> QuadraticRegion:
    w = np.atleast_2d(np.asarray(w, dtype=float))
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    if np.abs(w - w.T).max() > 1e-10 * scale:
        raise ConfigError("W must be symmetric")
    if not 0 <= i <= coeffs.n:
        raise DataError(f"observation index {i} out of range")
    a_new, b_new = coeffs.a[-1], coeffs.b[-1]
    a_i, b_i = coeffs.a[i], coeffs.b[i]
    qmat = np.outer(b_new, b_new) * w - np.outer(b_i, b_i) * w
    qmat = 0.5 * (qmat + qmat.T)
    lin = 2.0 * (b_new * (w @ a_new) - b_i * (w @ a_i))
    cst = float(a_new @ w @ a_new - a_i @ w @ a_i)
    for arr in (qmat, lin):
        arr.setflags(write=False)
    return QuadraticRegion(qmat, lin, cst, i)


def region_l1(coeffs: AffineCoeffs, i: int) -> L1Region:
    if not 0 <= i < coeffs.n:
        raise DataError(f"observation index {i} out of range [0, {coeffs.n})")
    return L1Region(coeffs, i)


@dataclass(frozen=True)
class ChangeLine:
    """{z : normal . z + offset = 0} for one sign assignment of the four |.| terms.

    ``signs`` are the signs applied to (|a_1i + b_1i z_1|, |a_2i + b_2i z_2|,
    |a_1,n+1 + b_1,n+1 z_1|, |a_2,n+1 + b_2,n+1 z_2|). A degenerate pattern
    has a vanishing normal and describes no line.
    """

    normal: np.ndarray
    offset: float
    signs: tuple
    degenerate: bool = False

    def consistent(self, coeffs: AffineCoeffs, i: int, z) -> np.ndarray:
        """Whether z lies where every |.| term has the sign this pattern assumes."""
        z = np.asarray(z, dtype=float)
        terms = np.stack(
            [
                coeffs.a[i, 0] + coeffs.b[i, 0] * z[..., 0],
                coeffs.a[i, 1] + coeffs.b[i, 1] * z[..., 1],
                coeffs.a[-1, 0] + coeffs.b[-1, 0] * z[..., 0],
                coeffs.a[-1, 1] + coeffs.b[-1, 1] * z[..., 1],
            ],
            axis=-1,
        )
        return np.all(terms * np.asarray(self.signs) >= 0, axis=-1)

    def points(self, lower, upper, m: int) -> np.ndarray:
        """m points of the line, parametrized along the longer box side."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n1, n2 = self.normal
        if abs(n2) >= abs(n1):
            z1 = np.linspace(lower[0], upper[0], m)
            return np.column_stack([z1, -(self.offset + n1 * z1) / n2])
        z2 = np.linspace(lower[1], upper[1], m)
        return np.column_stack([-(self.offset + n2 * z2) / n1, z2])


def l1_changepoints_2d(coeffs: AffineCoeffs, i: int, tol: float = 1e-12) -> List[ChangeLine]:
    """All 2^4 sign patterns of S_i(z) - S_{n+1}(z) = 0 for q = 2."""
    if coeffs.q != 2:
        raise ConfigError("change-point enumeration is only defined for q = 2")
    if not 0 <= i < coeffs.n:
        raise DataError(f"observation index {i} out of range")
    a_i, b_i = coeffs.a[i], coeffs.b[i]
    a_n, b_n = coeffs.a[-1], coeffs.b[-1]
    scale = max(np.abs(b_i).max(), np.abs(b_n).max(), np.finfo(float).tiny)
    lines = []
    for signs in itertools.product((1, -1), repeat=4):
        s1, s2, s3, s4 = signs
        normal = np.array([s1 * b_i[0] - s3 * b_n[0], s2 * b_i[1] - s4 * b_n[1]])
        offset = float(s1 * a_i[0] + s2 * a_i[1] - s3 * a_n[0] - s4 * a_n[1])
        degenerate = bool(np.abs(normal).max() <= tol * scale)
        normal.setflags(write=False)
        lines.append(ChangeLine(normal, offset, signs, degenerate))
    return lines


def approximate_l1_hull(coeffs: AffineCoeffs, i: int):
    """Convex hull of pairwise change-line intersections inside E_i.

    Visualization aid only: E_i under L1 need not be convex, so this hull is an
    approximation and is never used for p-values. Returns None when fewer than
    three usable vertices exist.
    """
    from .geometry import convex_hull_2d

    lines = [ln for ln in l1_changepoints_2d(coeffs, i) if not ln.degenerate]
    region = region_l1(coeffs, i)
    pts = []
    for l1, l2 in itertools.combinations(lines, 2):
        a = np.vstack([l1.normal, l2.normal])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        z = np.linalg.solve(a, [-l1.offset, -l2.offset])
        if region.value(z) <= 1e-9 * max(1.0, np.abs(z).max()):
            pts.append(z)
    if len(pts) < 3:
        return None
    try:
        return convex_hull_2d(np.array(pts))
    except NumericalError:
        return None


@dataclass(frozen=True)
class WEstimate:
    """Inverse residual covariance.

    ``exchangeable`` is False: W is estimated from D_n alone, so coverage
    guarantees hold only approximately (it is not built symmetrically in the
    n+1 points).
    """

    w: np.ndarray
    sigma: np.ndarray
    jitter: float
    exchangeable: bool = False

    def measure(self) -> ConformityMeasure:
        return ConformityMeasure.wnorm(self.w)


def inverse_covariance(residuals) -> WEstimate:
    r = np.asarray(residuals, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[0] < 2:
        raise NumericalError("need at least two residual rows to estimate a covariance")
    sigma = np.atleast_2d(np.cov(r, rowvar=False))
    q = sigma.shape[0]
    jitter = W_JITTER * np.trace(sigma) / q
    sig_j = sigma + jitter * np.eye(q)
    lam = np.linalg.eigvalsh(sig_j)
    if not np.all(np.isfinite(lam)) or lam.min() <= 0 or lam.max() / lam.min() > 1e14:
        raise NumericalError("residual covariance is degenerate even after jitter")
    w = np.linalg.inv(sig_j)
    w = 0.5 * (w + w.T)
    w.setflags(write=False)
    sig_j.setflags(write=False)
    return WEstimate(w, sig_j, jitter)


def estimate_w(data: Dataset, hats_for_dn: HatSet) -> WEstimate:
    """W = inverse covariance of in-sample residuals of the smoother fit on D_n."""
    if hats_for_dn.size != data.n:
        raise DataError(f"hat matrices are {hats_for_dn.size}x{hats_for_dn.size} for n = {data.n}")
    if hats_for_dn.q != data.q:
        raise DataError("hat set dimension does not match responses")
    resid = np.column_stack(
        [data.responses[:, k] - h @ data.responses[:, k] for k, h in enumerate(hats_for_dn.mats)]
    )
    return inverse_covariance(resid)


def export_changepoints_csv(lines: List[ChangeLine], lower, upper, path, m: int = 200):
    """Write sampled change-line points as CSV rows (z1, z2, value=pattern index)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["z1", "z2", "value"])
        for idx, ln in enumerate(lines):
            if ln.degenerate:
                continue
            for z1, z2 in ln.points(lower, upper, m):
                wr.writerow([repr(float(z1)), repr(float(z2)), idx])
