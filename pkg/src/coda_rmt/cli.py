"""``coda`` command line: LSD figures, LSS and resolvent experiments, theory
calculators and the i.i.d.-basis null test.

Exit codes: 0 success, 2 usage error, 3 data/IO error, 4 numerical failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import __version__
from .clt import ContourCfg, lss_general_cov, lss_general_mean, lss_poly_cov, lss_poly_mean, resolvent_cov, resolvent_mean
from .errors import DataError, NumericalError
from .moments import builtin_moments, clt_params, parse_dist
from .montecarlo import (
    FUNCTIONS,
    ExperimentCfg,
    Stat,
    default_workers,
    parse_complex,
    parse_pair,
    parse_ratio,
    parse_stat,
    run_experiment,
    run_lsd_figure,
    split_pairs,
    write_samples_csv,
)
from .nulltest import null_test, parse_moments
from .spectra import write_histogram_csv
from .synth import CENTERED, KINDS, UNBIASED, ingest_csv

EXIT_DATA = 3
EXIT_NUMERICAL = 4


class _Failure(click.ClickException):
    def __init__(self, message, code):
        super().__init__(message)
        self.exit_code = code


class _Group(click.Group):
    """Maps library exceptions onto the documented exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except DataError as exc:
            raise _Failure(str(exc), EXIT_DATA) from exc
        except OSError as exc:
            raise _Failure(str(exc), EXIT_DATA) from exc
        except (NumericalError, ArithmeticError) as exc:
            raise _Failure(str(exc), EXIT_NUMERICAL) from exc
        except ValueError as exc:
            raise click.UsageError(str(exc), ctx) from exc


# parameter types -----------------------------------------------------------

class _Parsed(click.ParamType):
    def __init__(self, name, fn):
        self.name = name
        self.fn = fn

    def convert(self, value, param, ctx):
        if not isinstance(value, str):
            return value
        try:
            return self.fn(value)
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text):
    out = [int(t) for t in _split(text)]
    if not out:
        raise ValueError("empty list")
    return out


DIST = _Parsed("dist", parse_dist)
RATIO = _Parsed("ratio", parse_ratio)
INTS = _Parsed("ints", _int_list)
STATS = _Parsed("stats", lambda s: [parse_stat(t) for t in _split(s)])
POINTS = _Parsed("points", lambda s: [parse_complex(t) for t in _split(s)])
PAIRS = _Parsed("pairs", lambda s: [parse_pair(t) for t in split_pairs(s)])


def _seed_option(f):
    return click.option("--seed", type=int, envvar="CODA_SEED", default=0, show_default=True,
                        help="Base seed (env CODA_SEED).")(f)


def _workers_option(f):
    return click.option("--workers", type=click.IntRange(min=1), default=None,
                        help="Worker processes (default: available cores).")(f)


def _emit(text: str, out: str | None):
    if out is None:
        click.echo(text)
    else:
        Path(out).write_text(text + "\n")


def _load_config(path: str) -> dict:
    """Config JSON: top-level keys apply to every subcommand, a key naming a
    subcommand holds its own overrides."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError("config must be a JSON object")

    def norm(d):
        out = {}
        for k, v in d.items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            out[k.replace("-", "_")] = v
        return out

    commands = ("lsd", "lss", "resolvent", "test", "theory")
    flat = norm({k: v for k, v in raw.items() if k not in commands})
    return {cmd: {**flat, **norm(raw.get(cmd, {}))} for cmd in commands}


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="JSON file mirroring the flags; explicit flags take precedence.")
@click.version_option(__version__, prog_name="coda")
@click.pass_context
def cli(ctx, config_path):
    """Spectral analysis of sample covariance matrices of compositional data."""
    if config_path:
        cfg = _load_config(config_path)
        ctx.default_map = {cmd: {k: v for k, v in sub.items() if k in _PARAMS[cmd]}
                           for cmd, sub in cfg.items()}


@cli.command()
@click.option("--dist", type=DIST, required=True, help="Basis distribution, e.g. exp:5.")
@click.option("--n", "n", type=click.IntRange(min=2), required=True)
@click.option("--p", "p", type=click.IntRange(min=2), required=True)
@click.option("--bins", type=click.IntRange(min=1), default=60, show_default=True)
@_seed_option
@click.option("--kind", type=click.Choice(KINDS), default=UNBIASED, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
def lsd(dist, n, p, bins, seed, kind, out):
    """One-run ESD histogram against the limiting density."""
    fig = run_lsd_figure(dist, n, p, seed, bins, kind)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_histogram_csv(fig.histogram, out / "histogram.csv")
    with open(out / "density.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "density"])
        for x, d in zip(fig.grid, fig.density):
            w.writerow([repr(float(x)), repr(float(d))])
    summary = {"dist": str(dist), "seed": seed, "kind": kind, **fig.summary()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    click.echo(json.dumps(summary, indent=2))


def _run(dist, ratio, n_list, reps, seed, stats, pairs, centering, workers, dump_dir):
    if reps < 2:
        raise click.BadParameter("need at least 2 replications", param_hint="--reps")
    cfg = ExperimentCfg(dist, tuple(n_list), ratio, reps, seed, tuple(stats), tuple(pairs),
                        centering, workers=workers or default_workers(), dump_dir=dump_dir)
    for n in cfg.n_list:
        if n * cfg.ratio != cfg.p_for(n):
            click.echo(f"note: p = n*ratio = {float(n * cfg.ratio):g} rounded to {cfg.p_for(n)}", err=True)
    report = run_experiment(cfg)
    for f in report.failures:
        click.echo(f"replication failed: {f}", err=True)
    return report


@cli.command()
@click.option("--dist", type=DIST, required=True)
@click.option("--ratio", type=RATIO, required=True, help="p/n, e.g. 3/4 or 0.75.")
@click.option("--n", "n_list", type=INTS, required=True, help="Comma-separated sample sizes.")
@click.option("--reps", type=int, default=2000, show_default=True)
@click.option("--stats", type=STATS, default="x,x2,x3", show_default=True)
@click.option("--pairs", type=PAIRS, default="", help='Covariance pairs, e.g. "(x,x2)".')
@click.option("--centering", type=click.Choice(KINDS), default=UNBIASED, show_default=True)
@_seed_option
@_workers_option
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON (default stdout).")
@click.option("--samples-dir", type=click.Path(file_okay=False),
              help="Write normalized samples (G - mean)/sqrt(var), one CSV per (n, stat).")
@click.option("--dump-spectra", type=click.Path(file_okay=False), help="Persist every spectrum (.npy).")
def lss(dist, ratio, n_list, reps, stats, pairs, centering, seed, workers, out, samples_dir, dump_spectra):
    """Monte-Carlo means and variances of G(f) against the CLT limits."""
    report = _run(dist, ratio, n_list, reps, seed, stats, pairs, centering, workers, dump_spectra)
    if samples_dir:
        d = Path(samples_dir)
        d.mkdir(parents=True, exist_ok=True)
        for n in report.config.n_list:
            for s in report.config.stats:
                if not s.is_complex:
                    write_samples_csv(report.normalized(n, s), d / f"normalized_n{n}_{s.label}.csv")
    _emit(report.to_json(), out)


@cli.command()
@click.option("--dist", type=DIST, required=True)
@click.option("--ratio", type=RATIO, required=True)
@click.option("--z", "points", type=POINTS, default="", help="Comma-separated points, e.g. -3+2i,3+2i.")
@click.option("--pairs", type=PAIRS, default="", help='e.g. "(-3+2i,-1+1i),(3+2i,5+1i)".')
@click.option("--n", "n_list", type=INTS, required=True)
@click.option("--reps", type=int, default=2000, show_default=True)
@_seed_option
@_workers_option
@click.option("--out", type=click.Path(dir_okay=False))
def resolvent(dist, ratio, points, pairs, n_list, reps, seed, workers, out):
    """Monte-Carlo mean and pair covariances of M_p(z) (centered construct)."""
    stats = [Stat("resolvent", z=z) for z in points]
    if not stats and not pairs:
        raise click.UsageError("give --z and/or --pairs")
    report = _run(dist, ratio, n_list, reps, seed, stats, pairs, CENTERED, workers, None)
    _emit(report.to_json(), out)


@cli.command("test")
@click.option("--input", "input_path", type=click.Path(dir_okay=False), required=True)
@click.option("--stat", type=_Parsed("stat", parse_stat), default="x2", show_default=True)
@click.option("--moments", type=_Parsed("moments", parse_moments),
              help="mu=...,sigma2=...,m3=...,mu4c=... (raw third, central fourth).")
@click.option("--dist", type=DIST, help="Take the null moments from a built-in basis.")
@click.option("--orientation", type=click.Choice(["rows-are-samples", "rows-are-features"]),
              default="rows-are-samples", show_default=True)
@click.option("--renormalize/--no-renormalize", default=True, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def test_cmd(input_path, stat, moments, dist, orientation, renormalize, out):
    """Test the i.i.d.-basis null with a standardized G_{p,N}(f).

    A small p-value indicates that the table departs from normalized i.i.d.
    positive rows with the given basis moments.
    """
    if (moments is None) == (dist is None):
        raise click.UsageError("give exactly one of --moments or --dist")
    X = ingest_csv(input_path, orientation, renormalize)
    _emit(null_test(X, stat, moments, dist).to_json(), out)


def _enc(v):
    if v is None:
        return None
    if isinstance(v, complex):
        return [v.real, v.imag]
    return float(v)


@cli.command()
@click.option("--dist", type=DIST, required=True)
@click.option("--ratio", type=RATIO, required=True, help="Limiting ratio c.")
@click.option("--stats", type=STATS, default="x,x2,x3", show_default=True)
@click.option("--pairs", type=PAIRS, default="")
@click.option("--out", type=click.Path(dir_okay=False))
def theory(dist, ratio, stats, pairs, out):
    """Limiting means and (co)variances without simulation."""
    params = clt_params(builtin_moments(dist), float(ratio))
    contour = ContourCfg.default(params)

    def fn(s):
        return (lambda z, r=s.r: z**r) if s.kind == "poly" else FUNCTIONS[s.name]

    def mean(s):
        if s.kind == "resolvent":
            return resolvent_mean(s.z, params)
        if s.kind == "poly" and s.r <= 3:
            return lss_poly_mean(s.r, params)
        return lss_general_mean(fn(s), params, contour)

    def cov(a, b):
        if a.is_complex:
            return resolvent_cov(a.z, b.z, params) if abs(a.z - b.z) >= 1e-6 else None
        if a.kind == b.kind == "poly":
            return lss_poly_cov(a.r, b.r, params)
        return lss_general_cov(fn(a), fn(b), params, contour)

    doc = {
        "basis": str(dist), "c": float(ratio), "lambda": params.lam,
        "h1": params.h1, "h2": params.h2, "alpha1": params.alpha1, "alpha2": params.alpha2,
        "stats": [{"f": s.label, "mean": _enc(mean(s)), "variance": _enc(cov(s, s))} for s in stats],
    }
    if pairs:
        doc["pairs"] = [{"f": a.label, "g": b.label, "covariance": _enc(cov(a, b))} for a, b in pairs]
    _emit(json.dumps(doc, indent=2), out)


_PARAMS = {name: {p.name for p in cmd.params} for name, cmd in cli.commands.items()}


def main(argv=None):
    return cli.main(args=argv, prog_name="coda")


if __name__ == "__main__":
    sys.exit(main())
