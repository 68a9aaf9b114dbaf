"""Shared types, conformity measures and rank / p-value arithmetic.

Counts are kept as exact integers and converted to :class:`fractions.Fraction`
only when a p-value is reported, so that membership decisions near a region
boundary never depend on floating point division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np


class ConformalError(Exception):
    """Base class for errors raised by this package."""


class DataError(ConformalError):
    """Invalid or inconsistent input data."""


class ConfigError(ConformalError):
    """Invalid parameters or method/parameter mismatch."""


class NumericalError(ConformalError):
    """A numerical procedure failed (singular system, no bracket, ...)."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """n paired covariate rows (n x p) and response rows (n x q)."""

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2:
            raise DataError("covariates and responses must be 2-D")
        if x.shape[0] != y.shape[0]:
            raise DataError(
                f"row count mismatch: {x.shape[0]} covariate rows, {y.shape[0]} response rows"
            )
        if x.shape[0] < 1:
            raise DataError("empty dataset")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or Inf")
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "responses", _frozen(y))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def q(self) -> int:
        return self.responses.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.covariates[idx], self.responses[idx])

    def split_out(self, i: int):
        """Return ``(rest, x_i, y_i)`` with row ``i`` held out."""
        mask = np.ones(self.n, dtype=bool)
        mask[i] = False
        return self.take(mask), self.covariates[i].copy(), self.responses[i].copy()


@dataclass(frozen=True)
class AugmentedProblem:
    """The training data plus the (n+1)-th covariate and an optional candidate z."""

    base: Dataset
    x_new: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        x_new = np.atleast_1d(np.asarray(self.x_new, dtype=float))
        if x_new.shape != (self.base.p,):
            raise DataError(f"x_new has shape {x_new.shape}, expected ({self.base.p},)")
        object.__setattr__(self, "x_new", _frozen(x_new))
        if self.z is not None:
            z = np.atleast_1d(np.asarray(self.z, dtype=float))
            if z.shape != (self.base.q,):
                raise DataError(f"z has shape {z.shape}, expected ({self.base.q},)")
            object.__setattr__(self, "z", _frozen(z))

    @property
    def x_aug(self) -> np.ndarray:
        return np.vstack([self.base.covariates, self.x_new[None, :]])

    @property
    def y_aug(self) -> np.ndarray:
        if self.z is None:
            raise DataError("augmented responses need a candidate z")
        return np.vstack([self.base.responses, self.z[None, :]])


@dataclass(frozen=True)
class ConformityMeasure:
    """Either the L1 norm of the residual or the quadratic form r'Wr."""

    kind: str
    w: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("l1", "wnorm"):
            raise ConfigError(f"unknown conformity measure {self.kind!r}")
        if self.kind == "wnorm":
            if self.w is None:
                raise ConfigError("wnorm measure requires a weight matrix")
            w = np.atleast_2d(np.asarray(self.w, dtype=float))
            if w.shape[0] != w.shape[1]:
                raise ConfigError("weight matrix must be square")
            scale = max(np.abs(w).max(), np.finfo(float).tiny)
            if np.abs(w - w.T).max() > 1e-10 * scale:
                raise ConfigError("weight matrix must be symmetric")
            object.__setattr__(self, "w", _frozen(w))
        elif self.w is not None:
            raise ConfigError("l1 measure takes no weight matrix")

    @classmethod
    def l1(cls) -> "ConformityMeasure":
        return cls("l1")

    @classmethod
    def wnorm(cls, w) -> "ConformityMeasure":
        return cls("wnorm", np.atleast_2d(w))

    @property
    def q(self) -> Optional[int]:
        return None if self.w is None else self.w.shape[0]

    def is_psd(self) -> bool:
        if self.w is None:
            return True
        lam = np.linalg.eigvalsh(self.w)
        return bool(lam.min() >= -1e-10 * np.linalg.norm(self.w))

    def __call__(self, residuals) -> np.ndarray:
        """Scores for residual rows; the last axis indexes response dimensions."""
        r = np.asarray(residuals, dtype=float)
        if self.kind == "l1":
            return np.abs(r).sum(axis=-1)
        if r.shape[-1] != self.w.shape[0]:
            raise DataError(f"residual dimension {r.shape[-1]} does not match W {self.w.shape}")
        return np.einsum("...k,kl,...l->...", r, self.w, r)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.w is not None:
            d["w"] = self.w.tolist()
        return d


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise DataError("score vector must be 1-D with at least n+1 = 2 entries")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise DataError("scores must be finite and non-negative")
    return s


@dataclass(frozen=True)
class ScoreVector:
    """Conformity measures S_1..S_{n+1} at a fixed candidate z."""

    scores: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "scores", _frozen(_check_scores(self.scores)))
        if self.z is not None:
            object.__setattr__(self, "z", _frozen(np.atleast_1d(self.z)))

    @property
    def n(self) -> int:
        return self.scores.size - 1


def _as_scores(scores) -> np.ndarray:
    if isinstance(scores, ScoreVector):
        return scores.scores
    return _check_scores(scores)


def rank_of_last(scores) -> int:
    """Number of scores (including itself) that are <= the last score."""
    s = _as_scores(scores)
    return int(np.count_nonzero(s <= s[-1]))


def pi_score(scores) -> Fraction:
    s = _as_scores(scores)
    return Fraction(rank_of_last(s), s.size)


def pvalue_count(scores) -> int:
    """Number of training scores i <= n with S_{n+1} <= S_i."""
    s = _as_scores(scores)
    return int(np.count_nonzero(s[-1] <= s[:-1]))


def pvalue_from_scores(scores) -> Fraction:
    s = _as_scores(scores)
    return Fraction(pvalue_count(s), s.size)


def ranks_of_last(score_matrix) -> np.ndarray:
    """Row-wise :func:`rank_of_last` for an (m, n+1) array of scores."""
    s = np.asarray(score_matrix, dtype=float)
    return np.count_nonzero(s <= s[:, -1:], axis=1)


def pvalue_counts(score_matrix) -> np.ndarray:
    s = np.asarray(score_matrix, dtype=float)
    return np.count_nonzero(s[:, -1:] <= s[:, :-1], axis=1)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def region_membership_threshold(n: int, alpha: float) -> int:
    """ceil((1 - alpha)(n + 1)); a candidate belongs to the region iff its rank is <= this."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    alpha = check_alpha(alpha)
    # rounding guards against (1 - 0.3) * 10 = 7.000000000000001
    return int(math.ceil(round((1.0 - alpha) * (n + 1), 9)))
