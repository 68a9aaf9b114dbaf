"""Dataset ingestion (CSV) and synthetic multi-target regression data."""

from __future__ import annotations

import csv
import math
from typing import Optional, Sequence

import numpy as np
from sklearn.datasets import make_regression

from .core import ConfigError, DataError, Dataset

# UCI "Concrete Slump Test" column layout, as written by scripts/fetch_concrete.py.
# Mixture components are kg per m^3 of concrete; slump and flow are in cm.
CONCRETE_COVARIATES = [
    "cement",
    "slag",
    "fly_ash",
    "water",
    "superplasticizer",
    "coarse_aggregate",
    "fine_aggregate",
]
CONCRETE_RESPONSES = ["slump", "flow"]


def load_csv(path, covariates: Sequence[str], responses: Sequence[str]) -> Dataset:
    """Read the named columns of a headed CSV file into a :class:`Dataset`.

    Rows with missing values are rejected, listing their line numbers.
    """
    if not covariates or not responses:
        raise ConfigError("need at least one covariate and one response column")
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        missing_cols = [c for c in list(covariates) + list(responses) if c not in header]
        if missing_cols:
            raise DataError(f"{path}: columns not found: {missing_cols}")
        xi = [header.index(c) for c in covariates]
        yi = [header.index(c) for c in responses]
        xs, ys, incomplete = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            cells = [row[j].strip() for j in xi + yi]
            if any(c == "" or c.lower() in ("na", "nan") for c in cells):
                incomplete.append(line)
                continue
            vals = []
            for j, c in zip(xi + yi, cells):
                try:
                    v = float(c)
                except ValueError:
                    raise DataError(f"{path}:{line}: column {header[j]!r}: not a number: {c!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{line}: column {header[j]!r}: non-finite value")
                vals.append(v)
            xs.append(vals[: len(xi)])
            ys.append(vals[len(xi) :])
    if incomplete:
        raise DataError(f"{path}: rows with missing values at lines {incomplete}")
    if not xs:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(xs), np.array(ys))


def write_csv(data: Dataset, path, covariate_names=None, response_names=None):
    xn = covariate_names or [f"x{j + 1}" for j in range(data.p)]
    yn = response_names or [f"y{k + 1}" for k in range(data.q)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(xn) + list(yn))
        for x, y in zip(data.covariates, data.responses):
            wr.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])


def _count(frac: float, p: int) -> int:
    return max(1, math.floor(round(frac * p, 9)))


def synth_dataset(
    n: int = 15,
    p: int = 5,
    q: int = 2,
    informative_frac: float = 0.8,
    effective_rank_frac: float = 0.6,
    noise_sd: float = 5.0,
    seed: Optional[int] = 0,
) -> Dataset:
    """Low-rank covariates and a sparse linear map plus Gaussian noise.

    Defaults reproduce the n = 15, p = 5, q = 2 configuration with 80%
    informative features, effective rank 60% of p and noise sd 5.
    """
    for name, frac in (("informative_frac", informative_frac), ("effective_rank_frac", effective_rank_frac)):
        if not 0 < frac <= 1:
            raise ConfigError(f"{name} must lie in (0, 1], got {frac}")
    if min(n, p, q) < 1:
        raise ConfigError("n, p and q must be >= 1")
    if noise_sd < 0:
        raise ConfigError("noise_sd must be >= 0")
    x, y = make_regression(
        n_samples=n,
        n_features=p,
        n_informative=_count(informative_frac, p),
        n_targets=q,
        effective_rank=_count(effective_rank_frac, p),
        noise=noise_sd,
        random_state=seed,
    )
    return Dataset(x, np.asarray(y).reshape(n, q))
