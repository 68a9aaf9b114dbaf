"""Hat (smoother) matrices for predictors that are linear in the response.

Every constructor takes covariates only. The augmented design ``x_aug`` has
the n training rows followed by ``x_new`` as row n+1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, NumericalError

LOCAL_JITTER = 1e-10
MAX_CONDITION = 1e12


class _Counter:
    """Counts hat-matrix constructions; used to check the train-once property."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


constructions = _Counter()


@dataclass(frozen=True)
class HatSet:
    mats: tuple
    kind: str
    params: dict

    @property
    def q(self) -> int:
        return len(self.mats)

    @property
    def size(self) -> int:
        return self.mats[0].shape[0]


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian product kernel with one bandwidth per covariate."""

    bandwidths: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.bandwidths, dtype=float))
        if h.ndim != 1 or np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise ConfigError("bandwidths must be positive and finite")
        h.setflags(write=False)
        object.__setattr__(self, "bandwidths", h)

    def for_dim(self, p: int) -> np.ndarray:
        if self.bandwidths.size == 1:
            return np.full(p, self.bandwidths[0])
        if self.bandwidths.size != p:
            raise ConfigError(f"{self.bandwidths.size} bandwidths for {p} covariates")
        return self.bandwidths

    def log_weights(self, x: np.ndarray) -> np.ndarray:
        """log K_h(x_j - x_i) for all pairs, shape (m, m); row i is centered at x_i."""
        h = self.for_dim(x.shape[1])
        u = (x[None, :, :] - x[:, None, :]) / h
        return -0.5 * np.sum(u * u, axis=-1)


def _freeze(mats) -> tuple:
    out = []
    for m in mats:
        m = np.ascontiguousarray(m, dtype=float)
        m.setflags(write=False)
        out.append(m)
    return tuple(out)


def _as_design(x_aug) -> np.ndarray:
    x = np.asarray(x_aug, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigError("x_aug must be a 2-D array with at least two rows")
    if not np.all(np.isfinite(x)):
        raise ConfigError("x_aug contains NaN or Inf")
    return x


def ridge_hat(x_aug, lambdas: Sequence[float]) -> HatSet:
    """H_k = X (X'X + lambda_k I)^{-1} X' for each response dimension k."""
    x = _as_design(x_aug)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(lambdas < 0):
        raise ConfigError("ridge penalties must be >= 0")
    gram = x.T @ x
    p = gram.shape[0]
    mats = []
    cache = {}
    for lam in lambdas:
        if lam not in cache:
            a = gram + lam * np.eye(p)
            if lam == 0 and np.linalg.matrix_rank(x) < p:
                raise NumericalError("X'X is singular: rank-deficient design with zero penalty")
            h = x @ np.linalg.solve(a, x.T)
            cache[lam] = 0.5 * (h + h.T)
        mats.append(cache[lam])
    constructions.count += 1
    return HatSet(_freeze(mats), "ridge", {"lambdas": lambdas.tolist()})


def nw_weights(x, kernel: KernelSpec) -> np.ndarray:
    logw = kernel.log_weights(x)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def nw_hat(x_aug, kernel: KernelSpec, q: int = 1) -> HatSet:
    """Nadaraya-Watson smoother: row i holds the normalized kernel weights centered at x_i."""
    x = _as_design(x_aug)
    h = nw_weights(x, kernel)
    constructions.count += 1
    return HatSet(_freeze([h] * q), "nadaraya_watson", {"bandwidths": kernel.for_dim(x.shape[1]).tolist()})


def _cond(a: np.ndarray) -> float:
    if not np.all(np.isfinite(a)):
        return np.inf
    return float(np.linalg.cond(a))


def local_linear_row(x: np.ndarray, i: int, kernel: KernelSpec) -> np.ndarray:
    """Local-linear smoother weights at x_i: first row of (X'GX)^{-1} X'G."""
    h = kernel.for_dim(x.shape[1])
    u = (x - x[i]) / h
    logw = -0.5 * np.sum(u * u, axis=1)
    g = np.exp(logw - logw.max())
    xt = np.hstack([np.ones((x.shape[0], 1)), x - x[i]])
    a = xt.T @ (g[:, None] * xt)
    cond = _cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        # only regularize when needed: unconditional jitter biases well-posed rows
        a = a + LOCAL_JITTER * np.trace(a) * np.eye(a.shape[0])
        cond = _cond(a)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise NumericalError(f"local-linear system at row {i} is ill-conditioned (cond ~ {cond:.3g})")
    e1 = np.zeros(a.shape[0])
    e1[0] = 1.0
    return np.linalg.solve(a, e1) @ (xt.T * g)


def local_linear_hat(x_aug, kernel: KernelSpec, q: int = 1) -> HatSet:
    x = _as_design(x_aug)
    h = np.vstack([local_linear_row(x, i, kernel) for i in range(x.shape[0])])
    constructions.count += 1
    return HatSet(_freeze([h] * q), "local_linear", {"bandwidths": kernel.for_dim(x.shape[1]).tolist()})
