"""Gibbs sampler for the heteroskedastic probit with a Gaussian-process log variance.

One sweep updates, in order,

1. the latent utilities ``z`` (independent truncated normals),
2. the free coefficients ``theta`` (Gaussian weighted least squares),
3. the mixture labels of the log chi-squared approximation,
4. the log variance ``g`` at the design points (Gaussian-process regression
   of ``log((z - x'beta)^2) - mu_label`` with noise variances ``var_label``),
5. the log variance at prediction points, if any.

The Gaussian-process prior may be split into independent blocks, one per
value of a set of discrete covariates; each block then has its own Gram
matrix over the continuous covariates. Without grouping there is a single
block holding every observation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .distributions import as_generator, categorical_rows, sample_truncated_normal, RngStream
from .errors import DomainError, NumericalError
from .kernels import GramMatrix, KernelSpec, gram, jittered_cholesky, kernel_matrix
from .model import OMORI_TABLE, ChainState, Dataset, MixtureTable, log_squared_residual

log = logging.getLogger(__name__)


class SamplerError(NumericalError):
    """A Gibbs step failed; ``iteration`` is 1-based, 0 during initialization."""

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class ThetaPrior:
    """Gaussian prior ``theta ~ N(mean, precision^{-1})``.

    The sampler's default is the improper flat prior (``None``); a proper
    prior is needed e.g. for joint-distribution checks of the sampler.
    """

    mean: np.ndarray
    precision: np.ndarray


@dataclass
class GibbsConfig:
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    stream_id: tuple = (0,)
    prediction_points: Optional[np.ndarray] = None
    grouping: Sequence[int] = ()
    keep_g: bool = True
    check_invariants: bool = True
    theta_prior: Optional[ThetaPrior] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError(f"burn_in must lie in [0, iterations), got {self.burn_in}")
        if self.thin < 1:
            raise DomainError("thin must be at least 1")
        if self.prediction_points is not None:
            pts = np.atleast_2d(np.asarray(self.prediction_points, dtype=float))
            if not np.all(np.isfinite(pts)):
                raise DomainError("prediction points must be finite")
            self.prediction_points = pts
        self.grouping = tuple(int(j) for j in self.grouping)
        if isinstance(self.stream_id, (int, np.integer)):
            self.stream_id = (int(self.stream_id),)

    @property
    def retained(self):
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorDraws:
    """Retained draws of one chain.

    ``theta`` is ``(S, d - 1)``; ``g`` is ``(S, n)`` (``None`` when not kept);
    ``g_star`` is ``(S, m)`` for ``m`` prediction points (``None`` if ``m = 0``).
    """

    theta: np.ndarray
    g: Optional[np.ndarray]
    g_star: Optional[np.ndarray]
    theta_names: tuple = ()
    normalized_column: int = -1
    prediction_points: Optional[np.ndarray] = None

    @property
    def retained(self):
        return self.theta.shape[0]


# ---------------------------------------------------------------------------
# Gaussian-process blocks


@dataclass
class GPBlock:
    """Prior pieces for one independent Gaussian process.

    ``rows`` index observations, ``stars`` index prediction points. Matrices
    involving prediction points are cached once because the design is fixed.
    """

    rows: np.ndarray
    stars: np.ndarray
    gram: Optional[GramMatrix]
    cross: Optional[np.ndarray] = None  # K_{n*}, rows x stars
    star_gram: Optional[GramMatrix] = None  # K_** (jittered)
    # g_n | g_* under the prior: mean prior_map @ g_*, covariance cond_cov
    prior_map: Optional[np.ndarray] = None
    cond_cov: Optional[np.ndarray] = None
    cond_chol: Optional[np.ndarray] = None
    # g_* | g_n under the prior: mean interp @ g_n, covariance star_cov
    interp: Optional[np.ndarray] = None
    star_cov: Optional[np.ndarray] = None
    star_chol: Optional[np.ndarray] = None
    label: tuple = ()

    @classmethod
    def build(cls, spec: KernelSpec, design, rows, stars=None, star_points=None, label=()):
        rows = np.asarray(rows, dtype=int)
        stars = np.asarray([] if stars is None else stars, dtype=int)
        block = cls(rows, stars, gram(spec, design) if rows.size else None, label=tuple(label))
        if stars.size:
            block._attach_stars(spec, design, star_points)
        return block

    def _attach_stars(self, spec, design, star_points):
        self.star_gram = gram(spec, star_points)
        if self.gram is None:
            self.star_cov = self.star_gram.values
            self.star_chol = self.star_gram.chol
            return
        kns = kernel_matrix(spec, design, star_points)
        kss = self.star_gram
        self.cross = kns
        self.prior_map = kss.solve(kns.T).T
        cond = self.gram.values - self.prior_map @ kns.T
        cond = 0.5 * (cond + cond.T)
        self.cond_chol, jitter = jittered_cholesky(cond, start_at_zero=True)
        self.cond_cov = cond + jitter * np.eye(cond.shape[0])
        self.interp = self.gram.solve(kns).T
        scov = kss.values - kns.T @ self.interp.T
        scov = 0.5 * (scov + scov.T)
        self.star_chol, jitter = jittered_cholesky(scov, start_at_zero=True)
        self.star_cov = scov + jitter * np.eye(scov.shape[0])


def kernel_columns(d, grouping):
    """Covariate columns entering the kernel: all but the grouping columns."""
    cols = [j for j in range(d) if j not in set(grouping)]
    if not cols:
        raise DomainError("no continuous covariates left for the kernel")
    return cols


def build_blocks(data: Dataset, spec: KernelSpec, prediction_points=None, grouping=()):
    """Partition observations (and prediction points) into independent GP blocks."""
    stars_all = None if prediction_points is None else np.atleast_2d(np.asarray(prediction_points, float))
    if stars_all is not None and stars_all.shape[1] != data.d:
        raise DomainError(
            f"prediction points have dimension {stars_all.shape[1]}, data has {data.d} covariates"
        )
    grouping = tuple(grouping)
    for j in grouping:
        if not 0 <= j < data.d:
            raise DomainError(f"grouping column {j} out of range")
    cols = kernel_columns(data.d, grouping)
    X = data.X[:, cols]
    S = None if stars_all is None else stars_all[:, cols]
    if not grouping:
        stars = None if S is None else np.arange(S.shape[0])
        return [GPBlock.build(spec, X, np.arange(data.n), stars, S)]
    keys = [tuple(r) for r in data.X[:, grouping]]
    star_keys = [] if stars_all is None else [tuple(r) for r in stars_all[:, grouping]]
    blocks = []
    for key in sorted(set(keys) | set(star_keys)):
        rows = np.array([i for i, k in enumerate(keys) if k == key], dtype=int)
        stars = np.array([i for i, k in enumerate(star_keys) if k == key], dtype=int)
        try:
            blocks.append(
                GPBlock.build(spec, X[rows], rows, stars, None if S is None else S[stars], label=key)
            )
        except NumericalError as exc:
            raise NumericalError(f"group {key}: {exc}") from exc
    return blocks


# ---------------------------------------------------------------------------
# Conditional moments (closed forms used by the steps and their tests)


def theta_moments(data: Dataset, z, g, prior: Optional[ThetaPrior] = None):
    """Mean and Cholesky factor of the precision of ``theta | z, g``.

    Returns ``(mean, chol)`` with ``chol @ chol.T`` the posterior precision.
    """
    w = np.exp(-np.asarray(g, dtype=float))
    Xf = data.X_free
    wX = Xf * w[:, None]
    prec = Xf.T @ wX
    rhs = wX.T @ (np.asarray(z, dtype=float) - data.x_fixed)
    if prior is not None:
        prec = prec + prior.precision
        rhs = rhs + prior.precision @ prior.mean
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"weighted covariate cross-product is singular; column "
            f"'{_deficient_column(Xf * np.sqrt(w)[:, None], data.theta_names)}' is collinear with earlier columns or zero"
        ) from None
    mean = cho_solve((chol, True), rhs, check_finite=False)
    return mean, chol


def _deficient_column(A, names):
    for j in range(A.shape[1]):
        if np.linalg.matrix_rank(A[:, : j + 1]) < j + 1:
            return names[j] if j < len(names) else str(j)
    return names[0] if names else "0"


def theta_conditional(data: Dataset, z, g, prior: Optional[ThetaPrior] = None):
    """``(theta_hat, V_hat)``: mean and covariance of ``theta | z, g``."""
    mean, chol = theta_moments(data, z, g, prior)
    inv_chol = solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    return mean, inv_chol.T @ inv_chol


def g_conditional(K, resid, noise_var, prior_mean=None):
    """Moments of ``g ~ N(prior_mean, K)`` given ``resid = g + N(0, diag(noise_var))``.

    Returns ``(m, V)`` with
    ``m = prior_mean + K (K + S)^{-1} (resid - prior_mean)`` (equivalently
    ``S (K + S)^{-1} prior_mean + K (K + S)^{-1} resid``) and
    ``V = K - K (K + S)^{-1} K``.
    """
    K = np.asarray(K, dtype=float)
    resid = np.asarray(resid, dtype=float)
    pm = np.zeros_like(resid) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    A = K + np.diag(noise_var)
    L, _ = jittered_cholesky(A, start_at_zero=True)
    m = pm + K @ cho_solve((L, True), resid - pm)
    V = K - K @ cho_solve((L, True), K)
    return m, 0.5 * (V + V.T)


def g_conditional_with_star(block: GPBlock, g_star, resid, noise_var):
    """Moments of ``g_n`` given the data and ``g(x_*)`` for a block with prediction points."""
    return g_conditional(block.cond_cov, resid, noise_var, block.prior_map @ np.asarray(g_star, float))


def g_star_conditional(block: GPBlock, g_n):
    """Moments of ``g(x_*)`` given ``g_n`` under the prior."""
    if block.gram is None:
        return np.zeros(block.stars.size), block.star_cov
    return block.interp @ np.asarray(g_n, float), block.star_cov


# ---------------------------------------------------------------------------
# Steps


def step1_update_latents(rng, data: Dataset, state: ChainState):
    """Draw every ``z_i`` from ``N(x_i'beta, exp(g_i))`` truncated by ``y_i``."""
    state.z = sample_truncated_normal(rng, data.index(state.theta), np.exp(state.g), data.y == 1)
    return state


def step2_update_theta(rng, data: Dataset, state: ChainState, prior: Optional[ThetaPrior] = None):
    """Draw ``theta`` from its Gaussian full conditional."""
    gen = as_generator(rng)
    mean, chol = theta_moments(data, state.z, state.g, prior)
    xi = gen.standard_normal(mean.size)
    state.theta = mean + solve_triangular(chol.T, xi, lower=False, check_finite=False)
    return state


def label_log_weights(data, state, table):
    t = log_squared_residual(state.z, data.index(state.theta))
    return table.component_log_weights(t - state.g)


def step3_update_labels(rng, data: Dataset, state: ChainState, table: MixtureTable = OMORI_TABLE):
    """Draw mixture labels from their categorical full conditionals."""
    lw = label_log_weights(data, state, table)
    top = lw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericalError("all mixture components have zero density for some observation")
    state.labels = categorical_rows(rng, np.exp(lw - top))
    return state


def _regression_inputs(data, state, table):
    t = log_squared_residual(state.z, data.index(state.theta))
    return t - table.means[state.labels], table.variances[state.labels]


def _pathwise_update(prior_mean, prior_cov, prior_chol, resid, noise_var, xi, eta):
    """Exact draw from ``N(m, V)`` of :func:`g_conditional` by pathwise conditioning.

    ``f = prior_chol @ xi`` is a prior draw and ``eta * sqrt(noise_var)`` a
    noise draw; ``prior_mean + f + K (K + S)^{-1} (resid - prior_mean - f - e)``
    then has exactly the conditional law.
    """
    n = resid.size
    f = prior_chol @ xi
    e = np.sqrt(noise_var) * eta
    A = prior_cov.copy()
    A.flat[:: n + 1] += noise_var
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        L, _ = jittered_cholesky(A)
    alpha = cho_solve((L, True), resid - prior_mean - f - e, check_finite=False)
    return prior_mean + f + prior_cov @ alpha


def update_log_variance(rng, data: Dataset, state: ChainState, blocks, table: MixtureTable = OMORI_TABLE):
    """Draw ``g`` at the design points, block by block.

    Blocks with prediction points condition on the current ``g(x_*)``.
    Standard normals for every observation are drawn up front so that the
    result does not depend on how observations are partitioned into blocks
    whenever the partition is consistent with the kernel.
    """
    gen = as_generator(rng)
    resid, noise = _regression_inputs(data, state, table)
    xi = gen.standard_normal(data.n)
    eta = gen.standard_normal(data.n)
    g = state.g.copy()
    for b in blocks:
        if b.gram is None:
            continue
        r = b.rows
        try:
            if b.stars.size:
                pm = b.prior_map @ state.g_star[b.stars]
                g[r] = _pathwise_update(pm, b.cond_cov, b.cond_chol, resid[r], noise[r], xi[r], eta[r])
            else:
                g[r] = _pathwise_update(0.0, b.gram.values, b.gram.chol, resid[r], noise[r], xi[r], eta[r])
        except NumericalError as exc:
            raise NumericalError(f"group {b.label}: {exc}" if b.label else str(exc)) from exc
    state.g = g
    return state


def step4_update_g(rng, data: Dataset, state: ChainState, gram_matrix: GramMatrix, table=OMORI_TABLE):
    """Draw ``g`` at all design points under one Gaussian process (no prediction points)."""
    block = GPBlock(np.arange(data.n), np.empty(0, dtype=int), gram_matrix)
    return update_log_variance(rng, data, state, [block], table)


def step4_update_g_with_star(rng, data: Dataset, state: ChainState, block: GPBlock, table=OMORI_TABLE):
    """Draw ``g`` at the design points given the current log variance at ``x_*``."""
    if not block.stars.size:
        raise DomainError("block has no prediction points")
    return update_log_variance(rng, data, state, [block], table)


def step4_grouped(rng, data: Dataset, state: ChainState, blocks, table=OMORI_TABLE):
    """Groupwise draw of ``g``; the blocks' processes are independent."""
    return update_log_variance(rng, data, state, blocks, table)


def step5_update_g_star(rng, state: ChainState, blocks):
    """Draw ``g(x_*)`` for every prediction point given ``g`` at the design points."""
    gen = as_generator(rng)
    total = sum(b.stars.size for b in blocks)
    if total == 0:
        return state
    xi = gen.standard_normal(total)
    g_star = state.g_star.copy()
    k = 0
    for b in blocks:
        m = b.stars.size
        if not m:
            continue
        mean, _ = g_star_conditional(b, state.g[b.rows] if b.gram is not None else None)
        g_star[b.stars] = mean + b.star_chol @ xi[k : k + m]
        k += m
    state.g_star = g_star
    return state


# ---------------------------------------------------------------------------
# Chain driver


def initial_state(rng, data: Dataset, n_star=0, table: MixtureTable = OMORI_TABLE) -> ChainState:
    """Start from least squares of ``2y - 1``, ``g = 0`` and prior labels."""
    gen = as_generator(rng)
    theta0, _ = theta_moments(data, 2.0 * data.y - 1.0, np.zeros(data.n))
    labels = categorical_rows(gen, np.broadcast_to(table.weights, (data.n, table.size)))
    state = ChainState(theta0, np.zeros(data.n), np.zeros(data.n), labels, np.zeros(n_star))
    return step1_update_latents(gen, data, state)


def run_chain(
    data: Dataset,
    kernel_spec: KernelSpec,
    config: GibbsConfig,
    table: MixtureTable = OMORI_TABLE,
    on_draw: Optional[Callable[[int, ChainState], None]] = None,
    blocks=None,
) -> PosteriorDraws:
    """Run one chain and return the retained, thinned draws.

    ``on_draw(iteration, state)`` is called for every retained draw, which
    allows draws to be streamed to disk. Pass precomputed ``blocks`` to reuse
    Gram factorizations across chains on the same data.
    """
    rng = RngStream(config.seed, config.stream_id)
    gen = rng.generator
    if blocks is None:
        blocks = build_blocks(data, kernel_spec, config.prediction_points, config.grouping)
    n_star = 0 if config.prediction_points is None else config.prediction_points.shape[0]
    S = config.retained
    thetas = np.empty((S, data.d - 1))
    gs = np.empty((S, data.n)) if config.keep_g else None
    g_stars = np.empty((S, n_star)) if n_star else None

    try:
        state = initial_state(gen, data, n_star, table)
    except NumericalError as exc:
        raise SamplerError(0, exc) from exc

    k = 0
    check = config.check_invariants
    for it in range(1, config.iterations + 1):
        try:
            step1_update_latents(gen, data, state)
            if check:
                state.check(data.y, table.size)
            step2_update_theta(gen, data, state, config.theta_prior)
            step3_update_labels(gen, data, state, table)
            update_log_variance(gen, data, state, blocks, table)
            if n_star:
                step5_update_g_star(gen, state, blocks)
            if check:
                state.check(data.y, table.size)
        except (NumericalError, DomainError) as exc:
            raise SamplerError(it, exc) from exc
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            thetas[k] = state.theta
            if gs is not None:
                gs[k] = state.g
            if g_stars is not None:
                g_stars[k] = state.g_star
            if on_draw is not None:
                on_draw(it, state)
            k += 1
    return PosteriorDraws(
        thetas,
        gs,
        g_stars,
        data.theta_names,
        data.normalized_column,
        config.prediction_points,
    )
