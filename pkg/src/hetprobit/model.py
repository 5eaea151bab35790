"""Data and parameter types, the likelihood, and the log squared-residual transform.

The coefficient vector is ``beta = (theta', 1)'`` up to column order: one
covariate (``Dataset.normalized_column``) carries the coefficient fixed at 1
and ``theta`` holds the coefficients of the remaining columns in their
original order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DataError, DomainError, NumericalError

RESIDUAL_FLOOR = 1e-50


@dataclass(frozen=True)
class MixtureTable:
    """Gaussian location-scale mixture ``sum_j w_j N(mean_j, var_j)``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.ndim == m.ndim == v.ndim == 1 and w.size == m.size == v.size >= 1):
            raise DomainError("mixture weights, means and variances must be equal-length vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must be nonnegative and sum to 1 (sum {w.sum()!r})")
        if np.any(~(v > 0)):
            raise DomainError("mixture variances must be positive")
        for name, arr in (("weights", w), ("means", m), ("variances", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_norm", np.log(w) - 0.5 * np.log(2 * np.pi * v))

    @property
    def size(self):
        return self.weights.size

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / np.sqrt(self.variances)
        return special.ndtr(z) @ self.weights

    def component_log_weights(self, resid):
        """``log(w_j) + log phi(resid | mean_j, var_j)`` for each row of ``resid``."""
        r = np.asarray(resid, dtype=float)[..., None] - self.means
        return self._log_norm - 0.5 * r * r / self.variances


# Ten-component approximation to log chi^2_1 from Omori, Chib, Shephard and
# Nakajima (2007, J. Econometrics 140, Table 1): weights, means, variances.
OMORI_TABLE = MixtureTable(
    weights=np.array(
        [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115]
    ),
    means=np.array(
        [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]
    ),
    variances=np.array(
        [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342]
    ),
)
assert OMORI_TABLE.size == 10


def mixture_logchisq_density_check(table: MixtureTable, draws=10**6, rng=None) -> float:
    """Kolmogorov distance between ``table`` and the empirical law of ``log(W^2)``.

    ``W ~ N(0, 1)`` is simulated ``draws`` times; the returned value is the
    supremum over the real line of ``|F_mixture - F_empirical|``.
    """
    if rng is None:
        rng = np.random.default_rng(20070401)
    from .distributions import as_generator

    gen = as_generator(rng)
    sample = np.sort(np.log(gen.standard_normal(draws) ** 2))
    f = table.cdf(sample)
    k = np.arange(1, draws + 1) / draws
    return float(max(np.max(k - f), np.max(f - (k - 1.0 / draws))))


@dataclass(frozen=True)
class Dataset:
    """Fixed covariates ``X`` (n x d, original column order) and outcomes ``y``."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple = ()
    normalized_column: int = -1

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 2:
            raise DomainError(f"X must be n x d with n >= 1 and d >= 2, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DomainError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("y must be binary (0/1)")
        if not np.all(np.isfinite(X)):
            raise DomainError("covariates must be finite")
        d = X.shape[1]
        col = self.normalized_column
        if not -d <= col < d:
            raise DomainError(f"normalized_column {col} out of range for {d} covariates")
        columns = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(d))
        if len(columns) != d:
            raise DomainError(f"{len(columns)} column names for {d} covariates")
        X.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "normalized_column", col % d)
        free = [j for j in range(d) if j != col % d]
        X_free = np.ascontiguousarray(X[:, free])
        X_free.setflags(write=False)
        object.__setattr__(self, "X_free", X_free)
        object.__setattr__(self, "x_fixed", X[:, col % d].copy())

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def theta_names(self):
        return tuple(c for j, c in enumerate(self.columns) if j != self.normalized_column)

    def index(self, theta):
        """Linear index ``x_i' beta`` for every row."""
        return self.X_free @ np.asarray(theta, dtype=float) + self.x_fixed

    def full_beta(self, theta):
        return insert_unit(theta, self.normalized_column, self.d)


def insert_unit(theta, normalized_column, d):
    """``beta`` with 1 at ``normalized_column`` and ``theta`` elsewhere."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (d - 1,):
        raise DomainError(f"theta must have {d - 1} entries, got {theta.size}")
    return np.insert(theta, normalized_column % d, 1.0)


@dataclass
class ChainState:
    """Mutable Gibbs state for one chain.

    ``labels`` are 0-based mixture component indices. ``g_star`` holds the
    log variance at prediction points (empty when there are none).
    """

    theta: np.ndarray
    g: np.ndarray
    z: np.ndarray
    labels: np.ndarray
    g_star: np.ndarray = field(default_factory=lambda: np.empty(0))

    def check(self, y, n_components=10):
        """Raise if the latent signs disagree with ``y`` or a value is invalid."""
        y = np.asarray(y)
        bad = np.flatnonzero(np.where(y == 1, self.z < 0, self.z >= 0))
        if bad.size:
            i = int(bad[0])
            raise NumericalError(f"sign consistency violated at observation {i}: y={y[i]}, z={self.z[i]!r}")
        if np.any((self.labels < 0) | (self.labels >= n_components)):
            raise NumericalError("mixture label out of range")
        for name in ("theta", "g", "z", "g_star"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericalError(f"non-finite entry in {name}")


def _index(x, theta, normalized_column):
    x = np.asarray(x, dtype=float)
    beta = insert_unit(theta, normalized_column, x.shape[-1])
    return x @ beta


def choice_probability(x, theta, g_at_x, normalized_column=-1):
    """``Phi(x'beta * exp(-g(x)/2))`` with ``beta = (theta', 1)'``.

    ``x`` may be a single covariate vector or an ``(n, d)`` array.
    """
    x = np.asarray(x, dtype=float)
    g_at_x = np.asarray(g_at_x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(g_at_x)) and np.all(np.isfinite(theta))):
        raise DomainError("choice_probability inputs must be finite")
    p = special.ndtr(_index(x, theta, normalized_column) * np.exp(-0.5 * g_at_x))
    return float(p) if np.ndim(p) == 0 else p


def log_likelihood(data: Dataset, theta, g) -> float:
    """Binary log likelihood of the heteroskedastic probit.

    Uses ``log Phi`` on the signed scaled index, so extreme indices do not
    round to ``log 0`` unless the probability truly underflows (``-inf``).
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (data.n,):
        raise DomainError(f"g has shape {g.shape}, expected ({data.n},)")
    s = data.index(theta) * np.exp(-0.5 * g)
    signed = np.where(data.y == 1, s, -s)
    return float(np.sum(special.log_ndtr(signed)))


def log_squared_residual(z, index):
    """``log((z - index)^2)`` with the squared residual floored at 1e-50."""
    r = np.asarray(z, dtype=float) - index
    return np.log(np.maximum(r * r, RESIDUAL_FLOOR))


def transform_T(z, x, theta, normalized_column=-1):
    """``T(z, x, beta) = log((z - x'beta)^2)`` (floored)."""
    out = log_squared_residual(z, _index(x, theta, normalized_column))
    return float(out) if np.ndim(out) == 0 else out


def read_dataset(path, normalized_column=None, outcome="y") -> Dataset:
    """Load a CSV with a header row, a 0/1 ``y`` column and numeric covariates.

    ``normalized_column`` names the covariate whose coefficient is fixed at
    1; the last covariate column is used when it is ``None``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file", line=1) from None
        if outcome not in header:
            raise DataError(f"missing outcome column '{outcome}' in header {header}", line=1)
        if len(set(header)) != len(header):
            raise DataError("duplicate column names in header", line=1)
        yj = header.index(outcome)
        covariates = [h for h in header if h != outcome]
        if len(covariates) < 2:
            raise DataError("need at least two covariate columns", line=1)
        rows, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"non-numeric field ({exc})", line=lineno) from None
            if vals[yj] not in (0.0, 1.0):
                raise DataError(f"'{outcome}' must be 0 or 1, found {row[yj]!r}", line=lineno)
            if not all(np.isfinite(vals)):
                raise DataError("non-finite covariate", line=lineno)
            ys.append(int(vals[yj]))
            rows.append([v for j, v in enumerate(vals) if j != yj])
    if not rows:
        raise DataError("no data rows", line=2)
    if normalized_column is None:
        col = len(covariates) - 1
    elif normalized_column in covariates:
        col = covariates.index(normalized_column)
    else:
        raise DataError(f"normalized column '{normalized_column}' not among covariates {covariates}", line=1)
    return Dataset(np.array(rows), np.array(ys), tuple(covariates), col)


def format_float(v) -> str:
    return format(float(v), ".17g")


def write_dataset(data: Dataset, path) -> None:
    """Write ``data`` in the ingestion format (header ``y,<covariates>``)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("y",) + data.columns)
        for yi, row in zip(data.y, data.X):
            w.writerow([int(yi)] + [format_float(v) for v in row])
