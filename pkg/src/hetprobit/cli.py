"""Command-line interface: ``fit``, ``predict``, ``simulate`` and ``replicate-study``.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` text file
(``#`` starts a comment). Keys are the long option names with dashes or
underscores, e.g. ``length_scale = 1``. Command-line flags override the file.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure
in the sampler, 4 study finished with failed replications.

Output files
------------
fit / predict write to ``--out`` (a directory):

``draws.csv``
    One row per retained draw: ``theta_<col>`` for each free coefficient,
    then ``g_<i>`` for each ``--g-indices`` entry (0-based observation),
    then ``gstar_<k>`` for each prediction point.
``summary.csv``
    ``parameter,median,lower,upper,level,ess`` per free coefficient.
``summary.json``
    The same summary plus predictions as nested key-value data.
``diagnostics.csv``
    ``parameter,mean,sd,ess,mcse`` for every column of draws.csv and the
    log likelihood.
``predictions.csv`` (predict only)
    ``point,x,probability,decision``; ``x`` is space-separated.

replicate-study writes one CSV table (``--out``) with columns
``alpha,n,replications,failures,mse,mse_se,coverage,coverage_se,
avg_length,avg_length_se,status`` where ``status`` is ``ok`` or ``partial``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError, NumericalError
from .gibbs import GibbsConfig, build_blocks, run_chain
from .kernels import KernelSpec
from .model import Dataset, format_float, log_likelihood, read_dataset, write_dataset
from .posterior import (
    effective_sample_size,
    format_summary,
    summarize,
    write_predictions,
    write_summary,
    write_summary_json,
)
from .simstudy import STUDY_FIELDS, DgpSpec, format_study, generate_dgp, run_study

log = logging.getLogger("hetprobit")

EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

FAST_STUDY = {"n": 100, "replications": 50, "iterations": 4000, "burn_in": 2000}


class ConfigError(DomainError):
    pass


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; keys are normalized to snake_case."""
    out = {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _parse_points(text):
    """``"1,0; 0.5,2"`` -> 2 x 2 array."""
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    try:
        return np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError:
        raise ConfigError(f"cannot parse prediction points {text!r}") from None


def _load_points(value):
    p = Path(value)
    if p.is_file():
        with p.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        return np.array([[float(v) for v in r] for r in rows])
    return _parse_points(value)


def _int_list(value):
    if value in (None, ""):
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(",") if v.strip())


def _float_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    out = []
    for v in str(value).split(","):
        v = v.strip()
        if "/" in v:
            num, den = v.split("/")
            out.append(float(num) / float(den))
        elif v:
            out.append(float(v))
    return out


@dataclass
class RunConfig:
    kernel: KernelSpec
    gibbs: GibbsConfig
    data_path: Path
    normalized_column: str | None = None
    output_dir: Path = Path("out")
    grouping: tuple = ()
    g_indices: tuple = ()
    level: float = 0.95
    prediction_points: np.ndarray | None = field(default=None, repr=False)


def _merged(args, keys):
    """Config-file values overridden by explicitly given flags."""
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None and flag != [] and flag is not False:
            values[key] = flag
    return values


def _get(values, key, conv, default=None):
    if key not in values or values[key] in (None, ""):
        return default
    try:
        return conv(values[key])
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {values[key]!r}") from None


def build_run_config(args, with_points=False) -> RunConfig:
    keys = (
        "data", "seed", "alpha", "length_scale", "iterations", "burn_in", "thin",
        "normalized_column", "out", "group", "g_indices", "level", "x_star", "points",
    )
    v = _merged(args, keys)
    data = _get(v, "data", Path)
    if data is None:
        raise ConfigError("no data file given (--data or 'data' in the config)")
    if not data.is_file():
        raise ConfigError(f"data file not found: {data}")
    kernel = KernelSpec(_get(v, "alpha", float, 1.5), _get(v, "length_scale", float, 1.0))
    points = None
    if with_points:
        stars = v.get("x_star")
        if isinstance(stars, list):
            points = _parse_points(";".join(stars))
        elif stars:
            points = _parse_points(stars)
        elif v.get("points"):
            points = _load_points(v["points"])
        if points is None or points.size == 0:
            raise ConfigError("predict needs --x-star or --points")
    gibbs = GibbsConfig(
        iterations=_get(v, "iterations", int, 10_000),
        burn_in=_get(v, "burn_in", int, 5_000),
        thin=_get(v, "thin", int, 1),
        seed=_get(v, "seed", int, 0),
        prediction_points=points,
    )
    level = _get(v, "level", float, 0.95)
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    return RunConfig(
        kernel=kernel,
        gibbs=gibbs,
        data_path=data,
        normalized_column=_get(v, "normalized_column", str),
        output_dir=_get(v, "out", Path, Path("out")),
        grouping=v.get("group") or (),
        g_indices=_get(v, "g_indices", _int_list, ()),
        level=level,
        prediction_points=points,
    )


def _resolve_grouping(names, data: Dataset):
    if isinstance(names, str):
        names = [s.strip() for s in names.split(",") if s.strip()]
    cols = []
    for name in names:
        if name not in data.columns:
            raise ConfigError(f"grouping column '{name}' not among covariates {list(data.columns)}")
        cols.append(data.columns.index(name))
    return tuple(cols)


class DrawWriter:
    """Streams retained draws to ``draws.csv`` and keeps a log-likelihood trace."""

    def __init__(self, fh, data: Dataset, g_indices, n_star):
        self.fh = fh
        self.data = data
        self.g_indices = list(g_indices)
        self.writer = csv.writer(fh, lineterminator="\n")
        self.header = (
            [f"theta_{c}" for c in data.theta_names]
            + [f"g_{i}" for i in self.g_indices]
            + [f"gstar_{k}" for k in range(n_star)]
        )
        self.writer.writerow(self.header)
        self.rows = []
        self.loglik = []

    def __call__(self, iteration, state):
        row = np.concatenate([state.theta, state.g[self.g_indices], state.g_star])
        self.writer.writerow([format_float(x) for x in row])
        self.rows.append(row)
        self.loglik.append(log_likelihood(self.data, state.theta, state.g))


def _write_diagnostics(path, names, columns):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("parameter", "mean", "sd", "ess", "mcse"))
        for name, col in zip(names, columns):
            col = np.asarray(col, dtype=float)
            sd = col.std(ddof=1) if col.size > 1 else float("nan")
            ess = effective_sample_size(col) if col.size >= 10 else float("nan")
            w.writerow([name, format_float(col.mean()), format_float(sd), format_float(ess), format_float(sd / np.sqrt(ess))])


def _run(cfg: RunConfig, predict: bool):
    data = read_dataset(cfg.data_path, cfg.normalized_column)
    grouping = _resolve_grouping(cfg.grouping, data)
    for i in cfg.g_indices:
        if not 0 <= i < data.n:
            raise ConfigError(f"g index {i} out of range 0..{data.n - 1}")
    gibbs = cfg.gibbs
    gibbs.grouping = grouping
    blocks = build_blocks(data, cfg.kernel, gibbs.prediction_points, grouping)
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    n_star = 0 if gibbs.prediction_points is None else gibbs.prediction_points.shape[0]
    with (out / "draws.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = DrawWriter(fh, data, cfg.g_indices, n_star)
        draws = run_chain(data, cfg.kernel, gibbs, on_draw=writer, blocks=blocks)
    summary = summarize(draws, cfg.level)
    write_summary(summary, out / "summary.csv")
    write_summary_json(summary, out / "summary.json")
    cols = np.array(writer.rows).T if writer.rows else np.empty((len(writer.header), 0))
    _write_diagnostics(out / "diagnostics.csv", writer.header + ["loglik"], list(cols) + [writer.loglik])
    if predict:
        write_predictions(summary, out / "predictions.csv")
    print(format_summary(summary))
    return 0


def cmd_fit(args):
    return _run(build_run_config(args), predict=False)


def cmd_predict(args):
    return _run(build_run_config(args, with_points=True), predict=True)


def cmd_simulate(args):
    v = _merged(args, ("n", "seed", "theta", "out"))
    n = _get(v, "n", int)
    if n is None:
        raise ConfigError("simulate needs --n")
    out = _get(v, "out", Path)
    if out is None:
        raise ConfigError("simulate needs --out")
    data = generate_dgp(DgpSpec(n, _get(v, "theta", float, 1.0), _get(v, "seed", int, 0)))
    try:
        write_dataset(data, out)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    print(f"wrote {data.n} rows to {out}")
    return 0


def cmd_replicate_study(args):
    v = _merged(
        args,
        ("n", "alphas", "replications", "iterations", "burn_in", "thin", "seed", "length_scale", "workers", "out", "level"),
    )
    if args.fast:
        for key, value in FAST_STUDY.items():
            v.setdefault(key, value)
    gibbs = GibbsConfig(
        iterations=_get(v, "iterations", int, 10_000),
        burn_in=_get(v, "burn_in", int, 5_000),
        thin=_get(v, "thin", int, 1),
        keep_g=False,
    )
    out = _get(v, "out", Path)
    if out is None:
        raise ConfigError("replicate-study needs --out")
    alphas = _get(v, "alphas", _float_list, [0.5, 1.5, 2.5, 3.5])

    def progress(done, total):
        log.info("replication %d/%d done", done, total)

    result = run_study(
        n=_get(v, "n", int, 250),
        alphas=alphas,
        replications=_get(v, "replications", int, 100),
        gibbs=gibbs,
        length_scale=_get(v, "length_scale", float, 1.0),
        seed=_get(v, "seed", int, 0),
        level=_get(v, "level", float, 0.95),
        workers=_get(v, "workers", int, None),
        progress=progress,
    )
    status = "partial" if result.failures else "ok"
    try:
        with Path(out).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STUDY_FIELDS + ("status",))
            for row in result.rows:
                w.writerow(
                    [format_float(row.alpha), row.n, row.replications, row.failures]
                    + [format_float(getattr(row, k)) for k in STUDY_FIELDS[4:]]
                    + [status]
                )
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    print(format_study(result))
    if result.failures:
        log.error("%d replication fits failed; table flagged partial", result.failures)
        return EXIT_PARTIAL
    return 0


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path")


def _add_chain(p):
    p.add_argument("--alpha", type=float, help="Matern smoothness (default 1.5)")
    p.add_argument("--length-scale", dest="length_scale", type=float, help="Matern length scale (default 1)")
    p.add_argument("--iterations", type=int, help="Gibbs iterations (default 10000)")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="discarded iterations (default 5000)")
    p.add_argument("--thin", type=int, help="keep every k-th draw (default 1)")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="hetprobit",
        description="Bayesian binary choice under median independence (Gibbs sampler with a GP log variance).",
        epilog=__doc__.split("Output files", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (
        ("fit", cmd_fit, "run the sampler and write draws, summary and diagnostics"),
        ("predict", cmd_predict, "posterior predictive probabilities and decisions at new points"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_chain(p)
        p.add_argument("--data", help="CSV with header, 0/1 column y and numeric covariates")
        p.add_argument("--normalized-column", dest="normalized_column", help="covariate whose coefficient is 1 (default: last)")
        p.add_argument("--group", help="comma-separated discrete covariates for groupwise GP updates")
        p.add_argument("--g-indices", dest="g_indices", help="comma-separated 0-based rows whose g draws are logged")
        p.add_argument("--level", type=float, help="credible level (default 0.95)")
        if name == "predict":
            p.add_argument("--x-star", dest="x_star", action="append", default=[], help="comma-separated covariate vector; repeatable")
            p.add_argument("--points", help="CSV of prediction points, one per row")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="simulate a dataset from the heteroskedastic logistic design")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--theta", type=float, help="true coefficient on x2 (default 1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate-study", help="Monte Carlo study: MSE, coverage, interval length per alpha")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--alphas", help="comma-separated smoothness values, e.g. 1/2,3/2")
    p.add_argument("--replications", type=int)
    p.add_argument("--length-scale", dest="length_scale", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--fast", action="store_true", help="n=100, 50 replications, 4000/2000 iterations unless overridden")
    p.set_defaults(func=cmd_replicate_study)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"hetprobit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, DataError) as exc:
        print(f"hetprobit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
