"""Monte Carlo study on Horowitz's (1992) heteroskedastic logistic design.

``Y = 1{X1 + theta X2 >= U}`` with ``X1 ~ N(0, 1)``, ``X2 ~ N(1, 1)`` and
``U = 0.25 (1 + 2 s^2 + s^4) V`` where ``s = X1 + X2`` and ``V`` is logistic
with median 0 and variance 1. The coefficient on ``X1`` is the one fixed at 1,
so ``theta`` (true value 1) is the single free coefficient.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import RngStream, as_generator, sample_logistic
from .errors import DomainError, NumericalError
from .gibbs import GibbsConfig, run_chain
from .kernels import KernelSpec
from .model import Dataset, format_float
from .posterior import summarize_theta

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DgpSpec:
    n: int
    theta_true: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")


def skedastic_factor(s):
    """Scale of ``U`` as a function of ``s = x1 + x2``."""
    s = np.asarray(s, dtype=float)
    return 0.25 * (1.0 + 2.0 * s**2 + s**4)


def generate_dgp(spec: DgpSpec, rng=None) -> Dataset:
    """Simulate one dataset; the stream defaults to ``RngStream(spec.seed)``."""
    gen = as_generator(RngStream(spec.seed) if rng is None else rng)
    x1 = gen.standard_normal(spec.n)
    x2 = 1.0 + gen.standard_normal(spec.n)
    v = sample_logistic(gen, 0.0, 1.0, size=spec.n)
    u = skedastic_factor(x1 + x2) * v
    y = (x1 + spec.theta_true * x2 >= u).astype(np.int8)
    return Dataset(np.column_stack([x1, x2]), y, ("x1", "x2"), normalized_column=0)


@dataclass
class StudyRow:
    alpha: float
    n: int
    replications: int
    failures: int
    mse: float
    mse_se: float
    coverage: float
    coverage_se: float
    avg_length: float
    avg_length_se: float


@dataclass
class StudyResult:
    rows: list
    # Per-alpha arrays of (median, lower, upper); NaN rows mark failed replications.
    records: dict = field(default_factory=dict)

    def row(self, alpha):
        for r in self.rows:
            if math.isclose(r.alpha, alpha):
                return r
        raise KeyError(alpha)

    @property
    def failures(self):
        return sum(r.failures for r in self.rows)


def _replication(task):
    """Fit one replication at every alpha; worker entry point."""
    r, n, theta_true, seed, alphas, length_scale, gibbs, level = task
    data = generate_dgp(DgpSpec(n, theta_true, seed), RngStream(seed, (r, 0)))
    out = []
    for alpha in alphas:
        cfg = replace(gibbs, seed=seed, stream_id=(r, 1), prediction_points=None, keep_g=False)
        try:
            draws = run_chain(data, KernelSpec(alpha, length_scale), cfg)
            med, (ci,) = summarize_theta(draws, level)
            out.append((float(med[0]), ci.lower, ci.upper, ""))
        except (NumericalError, DomainError) as exc:
            out.append((math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}"))
    return out


def aggregate(alpha, n, records, theta_true=1.0) -> StudyRow:
    """Mean square error, coverage and average length over successful replications."""
    rec = np.asarray(records, dtype=float).reshape(-1, 3)
    ok = np.all(np.isfinite(rec), axis=1)
    R = int(ok.sum())
    med, lo, hi = rec[ok].T
    if R == 0:
        nan = math.nan
        return StudyRow(alpha, n, 0, int((~ok).sum()), nan, nan, nan, nan, nan, nan)
    sq = (med - theta_true) ** 2
    covered = (lo <= theta_true) & (theta_true <= hi)
    length = hi - lo
    cov = float(covered.mean())

    def se(v):
        return float(v.std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan

    return StudyRow(
        alpha=alpha,
        n=n,
        replications=R,
        failures=int((~ok).sum()),
        mse=float(sq.mean()),
        mse_se=se(sq),
        coverage=cov,
        coverage_se=math.sqrt(cov * (1.0 - cov) / R),
        avg_length=float(length.mean()),
        avg_length_se=se(length),
    )


def run_study(
    n,
    alphas,
    replications,
    gibbs: GibbsConfig | None = None,
    length_scale=1.0,
    seed=0,
    theta_true=1.0,
    level=0.95,
    workers=None,
    progress=None,
) -> StudyResult:
    """Replicate the design ``replications`` times and fit every alpha.

    Each replication ``r`` draws its data from stream ``(seed, (r, 0))`` and
    its chains from ``(seed, (r, 1))``, so results do not depend on worker
    count and different alphas see the same datasets.
    """
    if replications < 1:
        raise DomainError("replications must be at least 1")
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("need at least one alpha")
    for a in alphas:
        KernelSpec(a, length_scale)
    gibbs = gibbs or GibbsConfig()
    workers = workers or os.cpu_count() or 1
    tasks = [(r, n, theta_true, seed, alphas, length_scale, gibbs, level) for r in range(replications)]
    results = [None] * replications
    if workers == 1:
        for r, task in enumerate(tasks):
            results[r] = _replication(task)
            if progress:
                progress(r + 1, replications)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, res in enumerate(pool.map(_replication, tasks)):
                results[r] = res
                if progress:
                    progress(r + 1, replications)
    rows, records = [], {}
    for j, alpha in enumerate(alphas):
        rec = np.array([results[r][j][:3] for r in range(replications)])
        for r in range(replications):
            if results[r][j][3]:
                log.warning("replication %d, alpha %g failed: %s", r, alpha, results[r][j][3])
        records[alpha] = rec
        rows.append(aggregate(alpha, n, rec, theta_true))
    return StudyResult(rows, records)


STUDY_FIELDS = (
    "alpha",
    "n",
    "replications",
    "failures",
    "mse",
    "mse_se",
    "coverage",
    "coverage_se",
    "avg_length",
    "avg_length_se",
)


def write_study(result: StudyResult, path) -> None:
    """One row per alpha; the ``*_se`` columns are Monte Carlo standard errors."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_FIELDS)
        for row in result.rows:
            w.writerow(
                [format_float(row.alpha), row.n, row.replications, row.failures]
                + [format_float(getattr(row, k)) for k in STUDY_FIELDS[4:]]
            )


def format_study(result: StudyResult) -> str:
    lines = [f"{'alpha':>6}{'n':>6}{'R':>6}{'MSE':>10}{'coverage':>11}{'avg length':>12}"]
    for r in result.rows:
        lines.append(
            f"{r.alpha:>6g}{r.n:>6d}{r.replications:>6d}{r.mse:>10.4f}{r.coverage:>10.1%} {r.avg_length:>11.4f}"
        )
    return "\n".join(lines)
