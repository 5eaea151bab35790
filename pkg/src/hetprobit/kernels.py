"""Matern covariance, Gram matrices and jittered Cholesky factorization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from .errors import DomainError, FactorizationError

JITTER_LADDER = (1e-10, 1e-8, 1e-6)

# Smoothness values with an exact polynomial-times-exponential form.
HALF_INTEGER_ALPHAS = (0.5, 1.5, 2.5, 3.5)


@dataclass(frozen=True)
class KernelSpec:
    """Matern smoothness ``alpha`` and length scale; prior variance is 1."""

    alpha: float
    length_scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise DomainError(f"length_scale must be positive, got {self.length_scale}")


def jittered_cholesky(a, ladder=JITTER_LADDER, start_at_zero=False):
    """Lower Cholesky factor of ``a + jitter * I``.

    Tries each jitter of ``ladder`` in turn (preceded by zero when
    ``start_at_zero``) and returns ``(L, jitter)`` for the first that
    factorizes.

    Raises
    ------
    FactorizationError
        If ``a`` cannot be factorized at the largest jitter.
    """
    a = np.asarray(a, dtype=float)
    steps = ((0.0,) if start_at_zero else ()) + tuple(ladder)
    eye = np.eye(a.shape[0])
    for jitter in steps:
        try:
            return np.linalg.cholesky(a + jitter * eye if jitter else a), jitter
        except np.linalg.LinAlgError:
            continue
    sym = 0.5 * (a + a.T)
    eig = np.linalg.eigvalsh(sym) if np.all(np.isfinite(sym)) else np.array([np.nan])
    cond = np.linalg.cond(sym) if np.all(np.isfinite(sym)) else np.nan
    raise FactorizationError(
        f"{a.shape[0]}x{a.shape[0]} matrix not positive definite at jitter {steps[-1]:g}",
        min_eigenvalue=float(eig.min()),
        condition=float(cond),
    )


def matern_bessel(alpha, d):
    """Matern correlation at scaled distance ``d = sqrt(2 alpha) r / l``.

    Evaluated in log space from the exponentially scaled Bessel function
    ``kve`` so large ``d`` underflows cleanly to zero.
    """
    d = np.asarray(d, dtype=float)
    out = np.ones_like(d)
    pos = d > 0
    dp = d[pos]
    with np.errstate(divide="ignore"):
        logk = (
            (1.0 - alpha) * np.log(2.0)
            - special.gammaln(alpha)
            + alpha * np.log(dp)
            + np.log(special.kve(alpha, dp))
            - dp
        )
    out[pos] = np.minimum(np.exp(logk), 1.0)
    return out


def _matern_closed_form(alpha, d):
    e = np.exp(-d)
    if alpha == 0.5:
        return e
    if alpha == 1.5:
        return (1.0 + d) * e
    if alpha == 2.5:
        return (1.0 + d + d * d / 3.0) * e
    return (1.0 + d + 0.4 * d * d + d**3 / 15.0) * e


def matern_from_distance(spec: KernelSpec, r):
    """Matern correlation as a function of Euclidean distance ``r``."""
    r = np.asarray(r, dtype=float)
    d = np.sqrt(2.0 * spec.alpha) * r / spec.length_scale
    if spec.alpha in HALF_INTEGER_ALPHAS:
        return _matern_closed_form(spec.alpha, d)
    return matern_bessel(spec.alpha, d)


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DomainError("points must be a nonempty list of vectors")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    return pts


def matern(spec: KernelSpec, x, y) -> float:
    """``kappa(x, y)`` for the Matern kernel; exactly 1 when ``x == y``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("kernel inputs must be finite")
    return float(matern_from_distance(spec, np.linalg.norm(x - y)))


def kernel_matrix(spec: KernelSpec, a, b):
    """Cross-covariance matrix ``(kappa(a_i, b_j))``."""
    a, b = _as_points(a), _as_points(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return matern_from_distance(spec, cdist(a, b))


@dataclass(frozen=True)
class GramMatrix:
    """Jittered Gram matrix ``K_n + jitter * I`` with its Cholesky factor."""

    values: np.ndarray
    jitter_applied: float
    chol: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.values.shape[0]

    def solve(self, b):
        """``(K_n + jitter I)^{-1} b`` through the cached factor."""
        from scipy.linalg import cho_solve

        return cho_solve((self.chol, True), b, check_finite=False)


def gram(spec: KernelSpec, points, ladder=JITTER_LADDER) -> GramMatrix:
    """Gram matrix of ``points`` with the smallest ladder jitter that factorizes."""
    pts = _as_points(points)
    k = matern_from_distance(spec, cdist(pts, pts))
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 1.0)
    chol, jitter = jittered_cholesky(k, ladder)
    values = k + jitter * np.eye(k.shape[0])
    values.setflags(write=False)
    chol.setflags(write=False)
    return GramMatrix(values, jitter, chol)


@dataclass(frozen=True)
class PredictionCov:
    """Prior covariances involving one prediction point ``x_*``."""

    kappa_star: float
    kappa_n_star: np.ndarray


def cross_cov(spec: KernelSpec, points, x_star) -> PredictionCov:
    pts = _as_points(points)
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.shape != (pts.shape[1],):
        raise DomainError(f"x_star has dimension {x_star.size}, points have {pts.shape[1]}")
    col = kernel_matrix(spec, pts, x_star[None, :])[:, 0]
    return PredictionCov(1.0, col)
