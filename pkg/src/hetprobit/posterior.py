"""Posterior summaries: medians, equitailed intervals, predictive probabilities, ESS."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DomainError
from .gibbs import PosteriorDraws
from .model import Dataset, format_float


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    level: float

    @property
    def length(self):
        return self.upper - self.lower

    def __contains__(self, value):
        return self.lower <= value <= self.upper


def summarize_theta(draws, level=0.95):
    """Coordinatewise posterior medians and equitailed ``level`` intervals.

    Quantiles interpolate linearly between order statistics. ``draws`` may
    be a :class:`PosteriorDraws` or an ``(S,)`` / ``(S, k)`` array.

    Returns
    -------
    medians : numpy.ndarray
    intervals : list of CredibleInterval
    """
    theta = draws.theta if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    if theta.shape[0] == 0:
        raise DomainError("no draws to summarize")
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    tail = 0.5 * (1.0 - level)
    q = np.quantile(theta, [tail, 0.5, 1.0 - tail], axis=0, method="linear")
    intervals = [CredibleInterval(float(lo), float(hi), level) for lo, hi in zip(q[0], q[2])]
    return q[1], intervals


def _star_index(draws: PosteriorDraws, x_star):
    if draws.g_star is None or draws.prediction_points is None:
        raise DomainError("draws carry no prediction-point log variances")
    if isinstance(x_star, (int, np.integer)):
        if not 0 <= x_star < draws.prediction_points.shape[0]:
            raise DomainError(f"prediction point index {x_star} out of range")
        return int(x_star)
    x_star = np.asarray(x_star, dtype=float)
    hits = np.flatnonzero(np.all(draws.prediction_points == x_star, axis=1))
    if not hits.size:
        raise DomainError(f"no draws of g at prediction point {x_star.tolist()}")
    return int(hits[0])


def predictive_draws(draws: PosteriorDraws, x_star):
    """Per-draw choice probabilities at a prediction point (point or its index)."""
    k = _star_index(draws, x_star)
    x = draws.prediction_points[k]
    beta = np.insert(draws.theta, draws.normalized_column % x.size, 1.0, axis=1)
    return special.ndtr((beta @ x) * np.exp(-0.5 * draws.g_star[:, k]))


def posterior_predictive(draws: PosteriorDraws, x_star) -> float:
    """Posterior predictive ``P(Y = 1 | x_*)``: the draw average of the choice probability."""
    return float(np.mean(predictive_draws(draws, x_star)))


def bayes_decision(prob) -> int:
    """Prediction minimizing posterior expected absolute loss: 1 iff ``prob >= 1/2``."""
    if not 0.0 <= prob <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {prob}")
    return 1 if prob >= 0.5 else 0


def choice_prob_draws(draws: PosteriorDraws, data: Dataset, i: int):
    """Per-draw ``Phi(x_i'beta_s exp(-g_s(x_i)/2))`` for observation ``i`` (0-based)."""
    if draws.g is None:
        raise DomainError("draws do not carry g at the design points")
    if not 0 <= i < data.n:
        raise DomainError(f"observation index {i} out of range 0..{data.n - 1}")
    index = draws.theta @ data.X_free[i] + data.x_fixed[i]
    return special.ndtr(index * np.exp(-0.5 * draws.g[:, i]))


def effective_sample_size(series) -> float:
    """Effective sample size by Geyer's initial monotone sequence estimator.

    A constant series is reported as fully efficient; the estimate is
    clipped to the series length.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise DomainError("effective sample size needs at least 10 values")
    x = x - x.mean()
    if not np.any(x):
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    rho = acov / acov[0]
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    stop = np.flatnonzero(pairs <= 0)
    pairs = pairs[: stop[0]] if stop.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    if tau <= 1.0 / n:
        return float(n)
    return float(min(n / tau, n))


@dataclass
class Summary:
    theta_names: tuple
    theta_medians: np.ndarray
    theta_intervals: list
    ess: np.ndarray
    predictive_probs: np.ndarray = field(default_factory=lambda: np.empty(0))
    decisions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    prediction_points: np.ndarray = None
    retained: int = 0


def summarize(draws: PosteriorDraws, level=0.95) -> Summary:
    medians, intervals = summarize_theta(draws, level)
    ess = np.array([effective_sample_size(col) for col in draws.theta.T]) if draws.retained >= 10 else np.full(draws.theta.shape[1], np.nan)
    probs = np.empty(0)
    decisions = np.empty(0, dtype=int)
    if draws.g_star is not None:
        probs = np.array([posterior_predictive(draws, k) for k in range(draws.g_star.shape[1])])
        decisions = np.array([bayes_decision(p) for p in probs], dtype=int)
    return Summary(
        tuple(draws.theta_names) or tuple(f"theta{j + 1}" for j in range(draws.theta.shape[1])),
        medians,
        intervals,
        ess,
        probs,
        decisions,
        draws.prediction_points,
        draws.retained,
    )


SUMMARY_FIELDS = ("parameter", "median", "lower", "upper", "level", "ess")
PREDICTION_FIELDS = ("point", "x", "probability", "decision")


def write_summary(summary: Summary, path) -> None:
    """One row per coefficient: ``parameter,median,lower,upper,level,ess``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for name, med, ci, ess in zip(summary.theta_names, summary.theta_medians, summary.theta_intervals, summary.ess):
            w.writerow([name, format_float(med), format_float(ci.lower), format_float(ci.upper), format_float(ci.level), format_float(ess)])


def write_predictions(summary: Summary, path) -> None:
    """One row per prediction point, in input order; ``x`` is space-separated."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_FIELDS)
        for k, (p, a) in enumerate(zip(summary.predictive_probs, summary.decisions)):
            x = " ".join(format_float(v) for v in summary.prediction_points[k])
            w.writerow([k, x, format_float(p), int(a)])


def summary_dict(summary: Summary) -> dict:
    out = {
        "retained": summary.retained,
        "theta": {
            name: {"median": float(m), "lower": ci.lower, "upper": ci.upper, "level": ci.level, "ess": float(e)}
            for name, m, ci, e in zip(summary.theta_names, summary.theta_medians, summary.theta_intervals, summary.ess)
        },
    }
    if summary.predictive_probs.size:
        out["predictions"] = [
            {"x": list(map(float, x)), "probability": float(p), "decision": int(a)}
            for x, p, a in zip(summary.prediction_points, summary.predictive_probs, summary.decisions)
        ]
    return out


def write_summary_json(summary: Summary, path) -> None:
    Path(path).write_text(json.dumps(summary_dict(summary), indent=2) + "\n", encoding="utf-8")


def format_summary(summary: Summary) -> str:
    """Human-readable table of the coefficient summary."""
    level = summary.theta_intervals[0].level if summary.theta_intervals else 0.95
    lines = [f"{'parameter':<14}{'median':>12}{'lower':>12}{'upper':>12}{'ESS':>10}   ({level:.0%} equitailed)"]
    for name, m, ci, e in zip(summary.theta_names, summary.theta_medians, summary.theta_intervals, summary.ess):
        lines.append(f"{name:<14}{m:>12.5f}{ci.lower:>12.5f}{ci.upper:>12.5f}{e:>10.1f}")
    for k, (p, a) in enumerate(zip(summary.predictive_probs, summary.decisions)):
        x = ", ".join(f"{v:g}" for v in summary.prediction_points[k])
        lines.append(f"x* = ({x}): P(Y=1) = {p:.5f}, decision {a}")
    return "\n".join(lines)
