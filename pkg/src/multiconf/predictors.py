"""Predictor registry.

A predictor is a ``fit_predict(x_train, y_train, x_query)`` callable wrapped in
:class:`PredictorSpec`. The ``fit`` method turns an :class:`AugmentedProblem`
into the n+1 predictions used by conformal refitting. Predictors that are
linear in the response also carry a ``hat`` builder so the exact module can
skip refitting.

The refit routes below deliberately do not reuse the hat-matrix code: they
solve each fit directly, which lets the tests compare the two.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import AugmentedProblem, ConfigError, ConformalError, Dataset
from .hat import HatSet, KernelSpec, local_linear_hat, nw_hat, ridge_hat


class PredictorFailure(ConformalError):
    pass


@dataclass
class PredictorSpec:
    """A deterministic multi-target regressor.

    ``hat(x_aug, q)`` is present only for smoothers whose predictions are
    ``H_k y_k``; ``reentrant`` declares that ``fit_predict`` may be called
    from several threads at once.
    """

    descriptor: str
    fit_predict: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    hat: Optional[Callable[[np.ndarray, int], HatSet]] = None
    reentrant: bool = True
    params: dict = field(default_factory=dict)
    fits: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def fit(self, problem: AugmentedProblem) -> np.ndarray:
        """Predictions for rows 1..n+1 of the augmented design.

        With ``problem.z`` set, the model is trained on D_{n+1}(z); without it,
        on D_n only.
        """
        x_aug = problem.x_aug
        if problem.z is None:
            x_train, y_train = problem.base.covariates, problem.base.responses
        else:
            x_train, y_train = x_aug, problem.y_aug
        return self.predict(x_train, y_train, x_aug)

    def predict(self, x_train, y_train, x_query) -> np.ndarray:
        with self._lock:
            self.fits += 1
        try:
            out = np.asarray(self.fit_predict(x_train, y_train, x_query), dtype=float)
        except ConformalError:
            raise
        except Exception as exc:
            raise PredictorFailure(f"{self.descriptor} failed: {exc}") from exc
        if out.ndim == 1:
            out = out[:, None]
        return out

    @property
    def is_hat(self) -> bool:
        return self.hat is not None


def _ridge_fit_predict(lam):
    def fit_predict(x, y, xq):
        p = x.shape[1]
        # stacked least squares: ||y - X b||^2 + lam ||b||^2
        xs = np.vstack([x, np.sqrt(lam) * np.eye(p)])
        ys = np.vstack([y, np.zeros((p, y.shape[1]))])
        beta, *_ = np.linalg.lstsq(xs, ys, rcond=None)
        return xq @ beta

    return fit_predict


def ridge(lam: float = 1.0) -> PredictorSpec:
    """Ridge regression without intercept, one shared penalty."""
    if lam < 0:
        raise ConfigError("ridge penalty must be >= 0")

    def hat(x_aug, q):
        return ridge_hat(x_aug, [lam] * q)

    return PredictorSpec(f"ridge(lam={lam:g})", _ridge_fit_predict(lam), hat, params={"lam": lam})


def _kernel_weights(xq_row, x, h):
    u = (x - xq_row) / h
    logw = -0.5 * np.sum(u * u, axis=1)
    return np.exp(logw - logw.max())


def nadaraya_watson(bandwidth=1.0) -> PredictorSpec:
    kernel = KernelSpec(bandwidth)

    def fit_predict(x, y, xq):
        h = kernel.for_dim(x.shape[1])
        out = np.empty((xq.shape[0], y.shape[1]))
        for j, row in enumerate(xq):
            w = _kernel_weights(row, x, h)
            out[j] = w @ y / w.sum()
        return out

    def hat(x_aug, q):
        return nw_hat(x_aug, kernel, q)

    return PredictorSpec("nadaraya_watson", fit_predict, hat, params={"bandwidth": kernel.bandwidths.tolist()})


def local_linear(bandwidth=1.0) -> PredictorSpec:
    kernel = KernelSpec(bandwidth)

    def fit_predict(x, y, xq):
        h = kernel.for_dim(x.shape[1])
        out = np.empty((xq.shape[0], y.shape[1]))
        for j, row in enumerate(xq):
            sw = np.sqrt(_kernel_weights(row, x, h))
            design = np.hstack([np.ones((x.shape[0], 1)), x - row])
            coef, *_ = np.linalg.lstsq(sw[:, None] * design, sw[:, None] * y, rcond=None)
            out[j] = coef[0]
        return out

    def hat(x_aug, q):
        return local_linear_hat(x_aug, kernel, q)

    return PredictorSpec("local_linear", fit_predict, hat, params={"bandwidth": kernel.bandwidths.tolist()})


def knn(k: int = 5) -> PredictorSpec:
    """Mean response of the k nearest training rows (a query row that is also a training row counts itself)."""
    if k < 1:
        raise ConfigError("k must be >= 1")

    def fit_predict(x, y, xq):
        d = ((xq[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
        kk = min(k, x.shape[0])
        idx = np.argsort(d, axis=1, kind="stable")[:, :kk]
        return y[idx].mean(axis=1)

    return PredictorSpec(f"knn(k={k})", fit_predict, params={"k": k})


def constant_mean() -> PredictorSpec:
    def fit_predict(x, y, xq):
        return np.repeat(y.mean(axis=0, keepdims=True), xq.shape[0], axis=0)

    return PredictorSpec("constant_mean", fit_predict)


def null_predictor() -> PredictorSpec:
    """Always predicts zero; handy as a degenerate reference."""

    def fit_predict(x, y, xq):
        return np.zeros((xq.shape[0], y.shape[1]))

    def hat(x_aug, q):
        z = np.zeros((x_aug.shape[0],) * 2)
        z.setflags(write=False)
        return HatSet(tuple([z] * q), "null", {})

    return PredictorSpec("null", fit_predict, hat)


REGISTRY = {
    "ridge": ridge,
    "nadaraya_watson": nadaraya_watson,
    "local_linear": local_linear,
    "knn": knn,
    "constant_mean": constant_mean,
    "null": null_predictor,
}


def make_predictor(name: str, **params) -> PredictorSpec:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown predictor {name!r}; choose from {sorted(REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


def hats_for(predictor: PredictorSpec, data: Dataset, x_new) -> HatSet:
    if predictor.hat is None:
        raise ConfigError(f"{predictor.descriptor} is not a hat-matrix predictor")
    x_aug = np.vstack([data.covariates, np.atleast_1d(x_new)[None, :]])
    return predictor.hat(x_aug, data.q)


def insample_hats(predictor: PredictorSpec, data: Dataset) -> HatSet:
    """Hat matrices of the smoother fit on D_n alone (n x n)."""
    if predictor.hat is None:
        raise ConfigError(f"{predictor.descriptor} is not a hat-matrix predictor")
    return predictor.hat(data.covariates, data.q)
