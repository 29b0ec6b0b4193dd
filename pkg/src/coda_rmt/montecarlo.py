"""Seeded replication harness for linear spectral statistics and M_p(z).

Every replication ``k`` at sample size ``n`` draws its basis from the Philox
stream keyed by ``(seed, n, k)``, so a report depends only on the config and
never on how replications were distributed over worker processes.  Per-rep
statistic vectors are reduced in replication order.
"""

from __future__ import annotations

import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .clt import (
    ContourCfg,
    lss_general_cov,
    lss_general_mean,
    lss_poly_cov,
    lss_poly_mean,
    resolvent_cov,
    resolvent_mean,
)
from .errors import NumericalError
from .moments import DistSpec, builtin_moments, clt_params, parse_dist
from .mplaw import MpLaw, lsd_integral, mp_moment, stieltjes
from .spectra import Histogram, Spectrum, esd_histogram, extremes, ks_distance, spectrum
from .synth import CENTERED, KINDS, UNBIASED, compose, make_rng, sample_basis

__all__ = [
    "Stat",
    "parse_complex",
    "format_complex",
    "parse_stat",
    "parse_pair",
    "parse_ratio",
    "ExperimentCfg",
    "MomentAccumulator",
    "ExperimentRow",
    "ExperimentReport",
    "g_statistic",
    "m_statistic",
    "run_experiment",
    "LsdFigure",
    "lsd_figure",
    "run_lsd_figure",
    "write_samples_csv",
]

# analytic test functions selectable by name; each must accept complex arrays
FUNCTIONS: dict[str, Callable] = {"exp": np.exp}

_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX_RE = re.compile(rf"^(?P<re>[+-]?{_NUM})?(?P<im>[+-]?(?:{_NUM})?i)?$")


def parse_complex(text: str) -> complex:
    """Parse ``a+bi`` literals: ``-3+2i``, ``2i``, ``-i``, ``1.5``."""
    s = text.strip()
    m = _COMPLEX_RE.match(s)
    if not s or m is None:
        raise ValueError(f"malformed complex literal {text!r}")
    re_part, im_part = m.group("re"), m.group("im")
    if re_part and im_part and im_part[0] not in "+-":
        if im_part != "i":
            raise ValueError(f"malformed complex literal {text!r}")
        re_part, im_part = None, re_part + "i"  # bare imaginary, e.g. "2i"
    real = float(re_part) if re_part else 0.0
    imag = 0.0
    if im_part:
        body = im_part[:-1]
        imag = float(body + "1") if body in ("", "+", "-") else float(body)
    return complex(real, imag)


def format_complex(z: complex) -> str:
    return f"{z.real:g}{z.imag:+g}i"


@dataclass(frozen=True)
class Stat:
    """A scalar statistic: monomial ``x^r``, named function, or ``M_p(z)``."""

    kind: str  # "poly" | "func" | "resolvent"
    r: int = 0
    name: str = ""
    z: complex = 0j

    @property
    def label(self) -> str:
        if self.kind == "poly":
            return "x" if self.r == 1 else f"x{self.r}"
        if self.kind == "func":
            return self.name
        return f"m({format_complex(self.z)})"

    @property
    def is_complex(self) -> bool:
        return self.kind == "resolvent"

    def __str__(self):
        return self.label


def parse_stat(text: str) -> Stat:
    s = text.strip()
    if s == "x":
        return Stat("poly", r=1)
    m = re.fullmatch(r"x\^?(\d+)", s)
    if m:
        r = int(m.group(1))
        if r < 1:
            raise ValueError("polynomial degree must be >= 1")
        return Stat("poly", r=r)
    if s in FUNCTIONS:
        return Stat("func", name=s)
    m = re.fullmatch(r"m\((.*)\)", s)
    if m:
        return Stat("resolvent", z=parse_complex(m.group(1)))
    raise ValueError(f"unknown statistic {text!r}; expected x, x2, xK, {', '.join(FUNCTIONS)} or m(z)")


def _stat_or_point(text: str) -> Stat:
    try:
        return parse_stat(text)
    except ValueError:
        return Stat("resolvent", z=parse_complex(text))


def parse_pair(text: str) -> tuple[Stat, Stat]:
    """``(a,b)`` where each side is a statistic or a bare complex point."""
    s = text.strip()
    if not (s.startswith("(") and s.endswith(")")):
        raise ValueError(f"pair must be written (a,b), got {text!r}")
    parts = s[1:-1].split(",")
    if len(parts) != 2:
        raise ValueError(f"pair must have two members, got {text!r}")
    a, b = (_stat_or_point(p) for p in parts)
    if a.is_complex != b.is_complex:
        raise ValueError("a pair must be two resolvent points or two real statistics")
    return a, b


def split_pairs(text: str) -> list[str]:
    """Split ``(a,b),(c,d)`` at top-level commas."""
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return [p.strip() for p in out if p.strip()]


def parse_ratio(value) -> Fraction:
    """``3/4`` or ``0.75`` (decimals are taken exactly as written)."""
    try:
        r = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"malformed ratio {value!r}") from None
    if r <= 0:
        raise ValueError("ratio must be positive")
    return r


@dataclass(frozen=True)
class ExperimentCfg:
    basis: DistSpec
    n_list: tuple[int, ...]
    ratio: Fraction
    reps: int
    seed: int
    stats: tuple[Stat, ...] = ()
    pairs: tuple[tuple[Stat, Stat], ...] = ()
    centering: str = UNBIASED
    bins: int = 60
    workers: int = 1
    dump_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "basis", parse_dist(self.basis))
        object.__setattr__(self, "ratio", parse_ratio(self.ratio))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "stats", tuple(parse_stat(s) if isinstance(s, str) else s for s in self.stats))
        object.__setattr__(self, "pairs", tuple(parse_pair(p) if isinstance(p, str) else tuple(p) for p in self.pairs))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.n_list:
            raise ValueError("n_list is empty")
        if self.centering not in KINDS:
            raise ValueError(f"centering must be one of {KINDS}")
        if not self.stats and not self.pairs:
            raise ValueError("no statistics requested")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for n in self.n_list:
            if n < 3 or self.p_for(n) < 2:
                raise ValueError(f"n={n} too small (need n >= 3 and p >= 2)")

    @property
    def c(self) -> float:
        return float(self.ratio)

    def p_for(self, n: int) -> int:
        return int(round(n * self.ratio))

    def columns(self) -> tuple[Stat, ...]:
        """Distinct scalar statistics evaluated per replication."""
        cols: list[Stat] = []
        for s in list(self.stats) + [m for pair in self.pairs for m in pair]:
            if s not in cols:
                cols.append(s)
        return tuple(cols)

    def to_dict(self) -> dict:
        rounded = {str(n): self.p_for(n) for n in self.n_list if n * self.ratio != self.p_for(n)}
        d = {
            "basis": str(self.basis),
            "n_list": list(self.n_list),
            "ratio": str(self.ratio),
            "reps": self.reps,
            "seed": self.seed,
            "stats": [s.label for s in self.stats],
            "pairs": [f"({a.label},{b.label})" for a, b in self.pairs],
            "centering": self.centering,
            "rng": "numpy Philox, SeedSequence([seed, n, rep])",
        }
        if rounded:
            d["p_rounded"] = rounded
        return d


class MomentAccumulator:
    """Running count, mean and co-moment matrix of real vectors.

    Partial accumulators merge with the pairwise update of Chan et al., so
    any partition of the data yields the same moments up to rounding.
    """

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.comoment = np.zeros((dim, dim))

    def push(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        d = x - self.mean
        self.mean = self.mean + d / self.count
        self.comoment = self.comoment + np.outer(d, x - self.mean)

    def extend(self, rows):
        for x in rows:
            self.push(x)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator(len(self.mean))
        na, nb = self.count, other.count
        out.count = na + nb
        if out.count == 0:
            return out
        d = other.mean - self.mean
        out.mean = self.mean + d * (nb / out.count)
        out.comoment = self.comoment + other.comoment + np.outer(d, d) * (na * nb / out.count)
        return out

    def cov(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.comoment, np.nan)
        return self.comoment / (self.count - 1)


def g_statistic(s: Spectrum, f, law: MpLaw) -> float:
    """``sum f(lambda_i) - p int f dF^c``; ``f`` is a degree (int) or a callable."""
    vals = np.asarray(s.values, dtype=float)
    if isinstance(f, (int, np.integer)):
        return float(np.sum(vals**f) - s.p * mp_moment(int(f), law))
    return float(np.sum(f(vals)) - s.p * lsd_integral(f, law))


def m_statistic(s: Spectrum, z: complex, law: MpLaw) -> complex:
    vals = np.asarray(s.values, dtype=float)
    diff = vals - z
    if np.min(np.abs(diff)) < 1e-12:
        raise NumericalError("z coincides with an eigenvalue")
    return complex(np.sum(1.0 / diff) - s.p * stieltjes(z, law).m)


def _centering_law(lam: float, n: int, p: int, kind: str) -> MpLaw:
    return MpLaw(lam, p / (n - 1) if kind == UNBIASED else p / n)


class _Evaluator:
    """Per-(n, p) statistic evaluation with the centering terms precomputed."""

    def __init__(self, cols, lam, n, p, kind):
        self.cols = cols
        self.law = _centering_law(lam, n, p, kind)
        self.p = p
        self.offsets = []
        for s in cols:
            if s.kind == "poly":
                self.offsets.append(p * mp_moment(s.r, self.law))
            elif s.kind == "func":
                self.offsets.append(p * lsd_integral(FUNCTIONS[s.name], self.law))
            else:
                self.offsets.append(p * stieltjes(s.z, self.law).m)

    def width(self) -> int:
        return sum(2 if s.is_complex else 1 for s in self.cols)

    def __call__(self, vals: np.ndarray) -> np.ndarray:
        out = []
        for s, off in zip(self.cols, self.offsets):
            if s.kind == "poly":
                out.append(np.sum(vals**s.r) - off)
            elif s.kind == "func":
                out.append(np.sum(FUNCTIONS[s.name](vals)) - off)
            else:
                diff = vals - s.z
                if np.min(np.abs(diff)) < 1e-12:
                    raise NumericalError("z coincides with an eigenvalue")
                v = np.sum(1.0 / diff) - off
                out.extend([v.real, v.imag])
        return np.array(out, dtype=float)


def _run_chunk(cfg: ExperimentCfg, n: int, reps: range):
    """Statistic vectors for replications ``reps`` at size ``n`` plus failures."""
    p = cfg.p_for(n)
    ev = _Evaluator(cfg.columns(), builtin_moments(cfg.basis).lam, n, p, cfg.centering)
    rows = np.full((len(reps), ev.width()), np.nan)
    failures = []
    for i, k in enumerate(reps):
        try:
            W = sample_basis(cfg.basis, n, p, make_rng(cfg.seed, n, k))
            s = spectrum(compose(W), cfg.centering)
            if cfg.dump_dir:
                np.save(Path(cfg.dump_dir) / f"spectrum_n{n}_rep{k}.npy", s.values)
            rows[i] = ev(s.values)
        except (MemoryError, NumericalError, np.linalg.LinAlgError) as exc:
            failures.append({"n": n, "rep": k, "error": f"{type(exc).__name__}: {exc}"})
    return rows, failures


def _chunks(reps: int, parts: int) -> list[range]:
    size = math.ceil(reps / parts)
    return [range(i, min(i + size, reps)) for i in range(0, reps, size)]


@dataclass
class ExperimentRow:
    n: int
    p: int
    stat: str
    emp_mean: float | complex | None
    emp_var: float | complex
    theo_mean: float | complex | None
    theo_var: float | complex | None
    se_mean: float | tuple[float, float] | None
    reps: int

    def to_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            if isinstance(v, complex):
                return [v.real, v.imag]
            if isinstance(v, tuple):
                return list(v)
            return float(v)

        return {
            "n": self.n, "p": self.p, "stat": self.stat,
            "emp_mean": enc(self.emp_mean), "emp_var": enc(self.emp_var),
            "theo_mean": enc(self.theo_mean), "theo_var": enc(self.theo_var),
            "se_mean": enc(self.se_mean), "reps": self.reps,
        }


@dataclass
class ExperimentReport:
    config: ExperimentCfg
    rows: list[ExperimentRow]
    failures: list[dict]
    samples: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "failures": self.failures,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def row(self, n: int, stat: str) -> ExperimentRow:
        for r in self.rows:
            if r.n == n and r.stat == stat:
                return r
        raise KeyError((n, stat))

    def values(self, n: int, stat) -> np.ndarray:
        """Per-replication values of a scalar statistic (complex for m(z))."""
        s = parse_stat(stat) if isinstance(stat, str) else stat
        j = _column_index(self.config.columns(), s)
        block = self.samples[n]
        return block[:, j] + 1j * block[:, j + 1] if s.is_complex else block[:, j]

    def normalized(self, n: int, stat) -> np.ndarray:
        """``(G - mu) / sqrt(V)`` for a real statistic."""
        s = parse_stat(stat) if isinstance(stat, str) else stat
        if s.is_complex:
            raise ValueError("normalized samples are defined for real statistics")
        r = self.row(n, s.label)
        v = self.values(n, s)
        return (v[np.isfinite(v)] - r.theo_mean) / math.sqrt(r.theo_var)


def _column_index(cols, s: Stat) -> int:
    j = 0
    for c in cols:
        if c == s:
            return j
        j += 2 if c.is_complex else 1
    raise KeyError(s.label)


class _Theory:
    def __init__(self, cfg: ExperimentCfg):
        self.params = clt_params(builtin_moments(cfg.basis), cfg.c)
        self.contour = ContourCfg.default(self.params)

    def _fn(self, s: Stat):
        if s.kind == "poly":
            return lambda z, r=s.r: z**r
        return FUNCTIONS[s.name]

    def mean(self, s: Stat):
        if s.kind == "resolvent":
            return resolvent_mean(s.z, self.params)
        if s.kind == "poly" and s.r <= 3:
            return lss_poly_mean(s.r, self.params)
        return lss_general_mean(self._fn(s), self.params, self.contour)

    def cov(self, a: Stat, b: Stat):
        if a.is_complex:
            if abs(a.z - b.z) < 1e-6:
                return None
            return resolvent_cov(a.z, b.z, self.params)
        if a.kind == b.kind == "poly":
            return lss_poly_cov(a.r, b.r, self.params)
        return lss_general_cov(self._fn(a), self._fn(b), self.params, self.contour)


def _summarize(cfg, theory, n, p, block) -> list[ExperimentRow]:
    cols = cfg.columns()
    ok = np.all(np.isfinite(block), axis=1)
    acc = MomentAccumulator(block.shape[1]).extend(block[ok])
    mean, cov = acc.mean, acc.cov()
    reps = acc.count
    rows = []

    def emp(s):
        j = _column_index(cols, s)
        if s.is_complex:
            return complex(mean[j], mean[j + 1]), (j, j + 1)
        return float(mean[j]), (j,)

    def pseudo_cov(ia, ib):
        if len(ia) == 1:
            return float(cov[ia[0], ib[0]])
        (a, b), (c, d) = ia, ib
        return complex(cov[a, c] - cov[b, d], cov[a, d] + cov[b, c])

    for s in cfg.stats:
        m, idx = emp(s)
        if s.is_complex:
            se = (math.sqrt(cov[idx[0], idx[0]] / reps), math.sqrt(cov[idx[1], idx[1]] / reps))
        else:
            se = math.sqrt(cov[idx[0], idx[0]] / reps)
        rows.append(ExperimentRow(n, p, s.label, m, pseudo_cov(idx, idx), theory.mean(s),
                                  theory.cov(s, s), se, reps))
    for a, b in cfg.pairs:
        _, ia = emp(a)
        _, ib = emp(b)
        rows.append(ExperimentRow(n, p, f"cov({a.label},{b.label})", None, pseudo_cov(ia, ib),
                                  None, theory.cov(a, b), None, reps))
    return rows


def run_experiment(cfg: ExperimentCfg) -> ExperimentReport:
    if cfg.dump_dir:
        Path(cfg.dump_dir).mkdir(parents=True, exist_ok=True)
    theory = _Theory(cfg)
    rows, failures, samples = [], [], {}
    workers = min(cfg.workers, cfg.reps)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for n in cfg.n_list:
            p = cfg.p_for(n)
            if pool is None:
                parts = [_run_chunk(cfg, n, range(cfg.reps))]
            else:
                chunks = _chunks(cfg.reps, workers)
                parts = list(pool.map(_run_chunk, [cfg] * len(chunks), [n] * len(chunks), chunks))
            block = np.vstack([b for b, _ in parts])
            for _, f in parts:
                failures.extend(f)
            samples[n] = block
            rows.extend(_summarize(cfg, theory, n, p, block))
    finally:
        if pool is not None:
            pool.shutdown()
    return ExperimentReport(cfg, rows, failures, samples)


def write_samples_csv(values, path) -> Path:
    """One value per line."""
    path = Path(path)
    np.savetxt(path, np.asarray(values, dtype=float), fmt="%.17g")
    return path


@dataclass(frozen=True, eq=False)
class LsdFigure:
    histogram: Histogram
    grid: np.ndarray
    density: np.ndarray
    ks: float
    lambda_max: float
    lambda_min: float
    law: MpLaw
    n: int
    p: int

    def summary(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            **self.law.summary(),
            "ks_distance": self.ks,
            "lambda_max": self.lambda_max,
            "lambda_min_nonzero": self.lambda_min,
            "lambda_max_limit": self.law.b,
            "lambda_min_limit": self.law.a,
        }


def lsd_figure(s: Spectrum, law: MpLaw, bins: int = 60, n: int | None = None) -> LsdFigure:
    """Histogram of the nonzero eigenvalues against the continuous part of F^c.

    The KS distance compares the nonzero ESD with ``(F^c - pm) / (1 - pm)``,
    ``pm`` being the point mass of F^c at zero.
    """
    nz = s.nonzero
    if len(nz) == 0:
        raise ValueError("spectrum has no nonzero eigenvalues")
    pm = law.point_mass_at_zero
    ks = ks_distance(nz, lambda x: (law.cdf(x) - pm) / (1 - pm))
    hist = esd_histogram(s, bins)
    grid = np.linspace(law.a, law.b, 514)[1:-1]
    lmax, lmin = extremes(s)
    return LsdFigure(hist, grid, law.density(grid), ks, lmax, lmin, law, n or 0, s.p)


def run_lsd_figure(dist, n: int, p: int, seed: int, bins: int = 60,
                   kind: str = UNBIASED) -> LsdFigure:
    """One replication of the ESD against F^c at ``c = p/n``."""
    d = parse_dist(dist)
    W = sample_basis(d, n, p, make_rng(seed, n, 0))
    s = spectrum(compose(W), kind)
    return lsd_figure(s, MpLaw(builtin_moments(d).lam, p / n), bins, n)


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1
