"""Basis matrices, compositions and the two covariance constructs.

``B_{p,N} = (1/N) (pX)' C_n (pX)`` with ``N = n - 1`` is the unbiased
construct studied by the CLT; ``B_p^0 = (p^2/n) (X - 1/p)'(X - 1/p)`` is the
centralized construct that shares its limit once centering uses ``c_n``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DataError
from .moments import DistSpec, parse_dist

__all__ = [
    "UNBIASED",
    "CENTERED",
    "BasisMatrix",
    "CompositionMatrix",
    "CovarianceMatrix",
    "make_rng",
    "sample_basis",
    "compose",
    "covariance",
    "ingest_csv",
    "write_csv",
]

UNBIASED = "unbiased_N"
CENTERED = "centered_n"
KINDS = (UNBIASED, CENTERED)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError("basis must be a 2-d array")
        if not np.all(v > 0):
            raise DataError("basis entries must be strictly positive")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class CompositionMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("composition must be a non-empty 2-d array")
        if np.any(v < 0) or np.any(v > 1):
            raise DataError("composition entries must lie in [0, 1]")
        if np.max(np.abs(v.sum(axis=1) - 1.0)) > 1e-12:
            raise DataError("composition rows must sum to 1")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    values: np.ndarray
    kind: str
    adjusted_sample_size: int

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.adjusted_sample_size + (1 if self.kind == UNBIASED else 0)


def make_rng(seed, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *key)``.

    Philox is counter based, so stream ``(seed, k)`` never depends on how many
    other streams were drawn before it.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *(int(k) for k in key)])
    return np.random.Generator(np.random.Philox(ss))


def _draw(dist: DistSpec, rng: np.random.Generator, size) -> np.ndarray:
    if dist.family == "exp":
        return rng.exponential(1.0 / dist.params[0], size)
    if dist.family == "chisq":
        w = rng.chisquare(dist.params[0], size)
        # chi2(1) underflows to 0 with probability ~1e-300 per draw; keep positivity anyway
        return _redraw_zeros(w, lambda k: rng.chisquare(dist.params[0], k))
    if dist.family == "pois":
        w = rng.poisson(dist.params[0], size).astype(float)
        return _redraw_zeros(w, lambda k: rng.poisson(dist.params[0], k))
    mean, var, lo, hi = dist.params
    sd = np.sqrt(var)
    a, b = (lo - mean) / sd, (hi - mean) / sd
    u = rng.random(size)
    w = stats.truncnorm.ppf(u, a, b, loc=mean, scale=sd)
    return _redraw_zeros(w, lambda k: stats.truncnorm.ppf(rng.random(k), a, b, loc=mean, scale=sd))


def _redraw_zeros(w, draw):
    bad = w <= 0
    while np.any(bad):
        w[bad] = draw(int(bad.sum()))
        bad = w <= 0
    return w


def sample_basis(dist, n: int, p: int, seed) -> BasisMatrix:
    """i.i.d. n x p basis from ``dist``; deterministic in ``(dist, n, p, seed)``.

    ``seed`` may also be a ready ``numpy.random.Generator``.
    """
    if n < 2 or p < 2:
        raise ValueError("need n >= 2 and p >= 2")
    d = parse_dist(dist)
    return BasisMatrix(_draw(d, make_rng(seed), (n, p)))


def compose(W) -> CompositionMatrix:
    w = np.asarray(getattr(W, "values", W), dtype=float)
    totals = w.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise DataError("a basis row sums to zero")
    x = w / totals
    x /= x.sum(axis=1, keepdims=True)
    return CompositionMatrix(x)


def covariance(X, kind: str = UNBIASED, basis_mean_mode: str = "analytic") -> CovarianceMatrix:
    """Build ``B_{p,N}`` (``kind='unbiased_N'``) or ``B_p^0`` (``'centered_n'``).

    For the centered construct ``basis_mean_mode='analytic'`` subtracts the
    exact mean 1/p of every entry; ``'sample'`` uses column means instead.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    M = _scaled_factor(X, kind, basis_mean_mode)
    B = M.T @ M
    B = 0.5 * (B + B.T)
    n = M.shape[0]
    size = n - 1 if kind == UNBIASED else n
    return CovarianceMatrix(_frozen(B), kind, size)


def _scaled_factor(X, kind: str, basis_mean_mode: str = "analytic") -> np.ndarray:
    """Matrix M with ``B = M'M`` (n x p)."""
    x = np.asarray(getattr(X, "values", X), dtype=float)
    n, p = x.shape
    if kind == UNBIASED:
        if n < 2:
            raise ValueError("unbiased covariance needs n >= 2")
        M = p * x
        M = M - M.mean(axis=0)
        return M / np.sqrt(n - 1)
    if kind != CENTERED:
        raise ValueError(f"kind must be one of {KINDS}")
    if basis_mean_mode == "analytic":
        M = p * x - 1.0
    elif basis_mean_mode == "sample":
        M = p * (x - x.mean(axis=0))
    else:
        raise ValueError("basis_mean_mode must be 'analytic' or 'sample'")
    return M / np.sqrt(n)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest_csv(path, orientation: str = "rows-are-samples", renormalize: bool = True) -> CompositionMatrix:
    """Read a comma-separated table of counts or proportions.

    A header line is detected by any non-numeric cell in the first row.
    With ``renormalize`` every sample is scaled to sum to one; otherwise rows
    farther than 1e-6 from the simplex are rejected.
    """
    if orientation not in ("rows-are-samples", "rows-are-features"):
        raise ValueError("orientation must be 'rows-are-samples' or 'rows-are-features'")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i + 1} ({len(r)} fields, expected {width})")
    try:
        a = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from None
    if orientation == "rows-are-features":
        a = a.T
    if not np.all(np.isfinite(a)):
        raise DataError(f"{path}: non-finite entry")
    if np.any(a < 0):
        raise DataError(f"{path}: negative entry")
    totals = a.sum(axis=1)
    if np.any(totals == 0):
        raise DataError(f"{path}: sample with all-zero parts")
    if renormalize:
        a = a / totals[:, None]
        a /= a.sum(axis=1, keepdims=True)
    else:
        off = np.max(np.abs(totals - 1.0))
        if off > 1e-6:
            raise DataError(f"{path}: rows off the simplex by {off:.3g}")
        a = a / totals[:, None]
    return CompositionMatrix(np.clip(a, 0.0, 1.0))


def write_csv(X, path) -> Path:
    """Write a matrix as CSV with round-trip precision (rows are samples)."""
    x = np.asarray(getattr(X, "values", X), dtype=float)
    path = Path(path)
    np.savetxt(path, x, delimiter=",", fmt="%.17g")
    return path
