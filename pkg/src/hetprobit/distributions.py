"""Random variates and normal CDF primitives used by the sampler and the DGP.

Every sampler takes an :class:`RngStream` (or a bare ``numpy.random.Generator``)
as its first argument and is otherwise pure, so a run is reproduced exactly
by reusing the same ``(seed, stream_id)`` pair.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy import special

from .errors import DomainError
from .kernels import jittered_cholesky

# One-sided truncation points further than this many standard deviations
# into the tail use exponential-proposal rejection instead of inverse-CDF.
TAIL_SWITCH = 5.0

_TINY = np.nextafter(0.0, 1.0)


class RngStream:
    """Seedable random stream.

    Streams with equal ``(seed, stream_id)`` produce identical variates.
    Distinct stream ids are derived through ``numpy.random.SeedSequence``
    spawn keys and are statistically independent.

    Parameters
    ----------
    seed : int
        Any integer; reduced modulo 2**64.
    stream_id : int or tuple of int
        Stream index, e.g. ``(replication, chain)``.
    """

    def __init__(self, seed: int, stream_id: int | tuple[int, ...] = 0):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.seed = int(seed) % 2**64
        self.stream_id = tuple(int(s) for s in stream_id)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int) -> "RngStream":
        """Independent stream whose id extends this one by ``keys``."""
        return RngStream(self.seed, self.stream_id + tuple(keys))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


class TruncationRegion(enum.Enum):
    """The two half-lines used for the latent utilities."""

    LEFT = "(-inf,0)"
    RIGHT = "[0,inf)"


def _check_finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("standard normal CDF requires finite input")
    return z


def std_normal_cdf(z):
    """Standard normal CDF, evaluated through the complementary error function."""
    z = _check_finite(z)
    out = special.ndtr(z)
    return float(out) if out.ndim == 0 else out


def log_std_normal_cdf(z):
    """``log Phi(z)``, accurate deep into the lower tail."""
    z = _check_finite(z)
    out = special.log_ndtr(z)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise DomainError("quantile requires probabilities in [0, 1]")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def _tail_rejection(gen, a):
    # Robert (1995): translated exponential proposal with the optimal rate.
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty_like(a)
    pending = np.arange(a.size)
    while pending.size:
        r = rate[pending]
        x = a[pending] + gen.exponential(1.0 / r)
        accept = gen.random(pending.size) <= np.exp(-0.5 * (x - r) ** 2)
        out[pending[accept]] = x[accept]
        pending = pending[~accept]
    return out


def standard_normal_excess(gen, a):
    """Draw ``X - a`` where ``X ~ N(0, 1)`` conditioned on ``X >= a``.

    Returning the excess rather than ``X`` keeps the lower bound exact:
    the result is always ``>= 0``.
    """
    a = np.asarray(a, dtype=float)
    shape = a.shape
    a = a.ravel()
    x = np.empty_like(a)
    tail = a > TAIL_SWITCH
    if np.any(tail):
        x[tail] = _tail_rejection(gen, a[tail])
    body = ~tail
    if np.any(body):
        ab = a[body]
        u = 1.0 - gen.random(ab.size)  # (0, 1]
        x[body] = -special.ndtri(u * special.ndtr(-ab))
    return np.maximum(x - a, 0.0).reshape(shape)


def sample_truncated_normal(rng, mean, variance, region):
    """Draw from ``N(mean, variance)`` restricted to one half-line.

    Parameters
    ----------
    rng : RngStream or numpy.random.Generator
    mean, variance : float or array_like
        Broadcast together; ``variance`` must be strictly positive.
    region : TruncationRegion, str, or array_like of bool
        ``TruncationRegion.RIGHT`` (or ``True``) for ``[0, inf)``,
        ``TruncationRegion.LEFT`` (or ``False``) for ``(-inf, 0)``. A boolean
        array selects the region elementwise.

    Returns
    -------
    float or numpy.ndarray
        Draws that lie in their region with probability one.
    """
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(~(variance > 0)):
        raise DomainError("truncated normal variance must be positive")
    if isinstance(region, str):
        region = TruncationRegion(region)
    if isinstance(region, TruncationRegion):
        right = np.full(np.broadcast(mean, variance).shape, region is TruncationRegion.RIGHT)
    else:
        right = np.asarray(region, dtype=bool)
    mean, variance, right = np.broadcast_arrays(mean, variance, right)
    sd = np.sqrt(variance)
    # Right region: Z = mean + sd*X with X >= -mean/sd.
    # Left region: Z = mean - sd*X' with X' >= mean/sd.
    bound = np.where(right, -mean / sd, mean / sd)
    excess = sd * standard_normal_excess(gen, bound)
    z = np.where(right, excess, -np.maximum(excess, _TINY))
    return float(z) if z.ndim == 0 else z


def sample_mvn(rng, mean, covariance):
    """Draw one vector from ``N(mean, covariance)``.

    Coordinates whose row and column of ``covariance`` are identically zero
    are returned equal to their mean. The remaining block is factorized with
    the jitter ladder of :func:`hetprobit.kernels.jittered_cholesky`.
    """
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise DomainError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max(initial=0))):
        raise DomainError("covariance must be symmetric")
    live = np.any(cov != 0, axis=1)
    out = mean.copy()
    if np.any(live):
        chol, _ = jittered_cholesky(cov[np.ix_(live, live)], start_at_zero=True)
        out[live] += chol @ gen.standard_normal(int(live.sum()))
    return out


def _normalized(weights):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or np.any(~np.isfinite(w)):
        raise DomainError("categorical weights must be finite and nonnegative")
    total = w.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DomainError("categorical weights must have a positive sum")
    return w / total


def sample_categorical(rng, weights, size=None):
    """Draw a 0-based category index with ``P(j) = w_j / sum(w)``."""
    gen = as_generator(rng)
    p = _normalized(weights)
    if p.ndim != 1:
        raise DomainError("weights must be a vector")
    cdf = np.cumsum(p)
    u = gen.random(size) * cdf[-1]
    # side='right' skips zero-weight categories sharing a cdf value.
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)
    return int(idx) if size is None else idx


def categorical_rows(rng, weights):
    """Vectorized :func:`sample_categorical`: one 0-based draw per row."""
    gen = as_generator(rng)
    p = _normalized(weights)
    cdf = np.cumsum(p, axis=1)
    u = gen.random(p.shape[0])[:, None] * cdf[:, -1:]
    idx = (cdf <= u).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def logistic_scale(variance: float) -> float:
    """Scale ``s`` of the logistic law with the given variance, ``pi^2 s^2 / 3``."""
    if not variance > 0:
        raise DomainError("logistic variance must be positive")
    return math.sqrt(3.0 * variance) / math.pi


def sample_logistic(rng, median=0.0, variance=1.0, size=None):
    """Logistic variates parameterized by median and variance."""
    gen = as_generator(rng)
    return gen.logistic(loc=median, scale=logistic_scale(variance), size=size)
