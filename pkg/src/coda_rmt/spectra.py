"""Eigenvalues of the covariance constructs, ESD histograms and edge values."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalError
from .synth import KINDS, CompositionMatrix, CovarianceMatrix, _scaled_factor

__all__ = [
    "Spectrum",
    "Histogram",
    "eigenvalues_sym",
    "spectrum",
    "esd_histogram",
    "extremes",
    "ks_distance",
    "write_histogram_csv",
]

DEFAULT_ZERO_TOL = 1e-9


def eigenvalues_sym(M) -> np.ndarray:
    """All eigenvalues of a real symmetric matrix, in descending order."""
    a = np.asarray(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        w = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    # stable descending order: ties keep ascending-index order of the reversed array
    order = np.argsort(-w, kind="stable")
    return w[order]


@dataclass(frozen=True, eq=False)
class Spectrum:
    values: np.ndarray
    p: int
    structural_zero_count: int
    zero_tol: float

    @property
    def threshold(self) -> float:
        return self.zero_tol * max(float(self.values[0]) if len(self.values) else 0.0, 1.0)

    @property
    def nonzero(self) -> np.ndarray:
        return self.values[self.values >= self.threshold]

    @classmethod
    def from_values(cls, values, p: int | None = None, zero_tol: float = DEFAULT_ZERO_TOL):
        v = np.asarray(values, dtype=float)
        p = len(v) if p is None else p
        if len(v) < p:
            v = np.concatenate([v, np.zeros(p - len(v))])
        elif len(v) != p:
            raise ValueError("more eigenvalues than the dimension")
        v = np.ascontiguousarray(v[np.argsort(-v, kind="stable")])
        v.setflags(write=False)
        thr = zero_tol * max(float(v[0]) if p else 0.0, 1.0)
        return cls(v, p, int(np.count_nonzero(v < thr)), zero_tol)


def spectrum(source, kind: str | None = None, zero_tol: float = DEFAULT_ZERO_TOL,
             route: str = "auto") -> Spectrum:
    """Spectrum of a covariance construct.

    ``source`` is either a :class:`CovarianceMatrix` (p x p route) or a
    composition matrix together with ``kind``.  In the latter case, when
    ``p > n`` (or ``route='gram'``) the nonzero eigenvalues come from the
    n x n matrix ``M M'`` and the rest are padded with zeros.
    """
    if isinstance(source, CovarianceMatrix):
        if kind is not None and kind != source.kind:
            raise ValueError("kind does not match the covariance matrix")
        return Spectrum.from_values(eigenvalues_sym(source.values), source.p, zero_tol)

    x = source.values if isinstance(source, CompositionMatrix) else np.asarray(source, float)
    if x.ndim != 2:
        raise ValueError("dimension mismatch: expected an n x p matrix")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS} when passing a composition")
    if route not in ("auto", "direct", "gram"):
        raise ValueError("route must be 'auto', 'direct' or 'gram'")
    M = _scaled_factor(x, kind)
    n, p = M.shape
    use_gram = route == "gram" or (route == "auto" and p > n)
    if use_gram:
        G = M @ M.T
        vals = eigenvalues_sym(0.5 * (G + G.T))
        if n > p:
            vals = vals[:p]
    else:
        B = M.T @ M
        vals = eigenvalues_sym(0.5 * (B + B.T))
    return Spectrum.from_values(vals, p, zero_tol)


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray

    def rows(self):
        for i in range(len(self.counts)):
            yield self.edges[i], self.edges[i + 1], int(self.counts[i]), self.density[i]


def esd_histogram(s: Spectrum, bins: int = 60, include_zeros: bool = False) -> Histogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    vals = s.values if include_zeros else s.nonzero
    if len(vals) == 0:
        raise ValueError("no eigenvalues selected for the histogram")
    counts, edges = np.histogram(vals, bins=bins)
    density = counts / (len(vals) * np.diff(edges))
    return Histogram(edges, counts, density)


def extremes(s: Spectrum) -> tuple[float, float]:
    """``(lambda_max, smallest nonzero eigenvalue)``."""
    nz = s.nonzero
    if len(nz) == 0 or s.values[0] <= 0:
        raise ValueError("spectrum has no nonzero eigenvalue")
    return float(s.values[0]), float(nz[-1])


def ks_distance(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|."""
    x = np.sort(np.asarray(sample, dtype=float))
    if len(x) == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    k = np.arange(1, len(x) + 1)
    return float(max(np.max(k / len(x) - F), np.max(F - (k - 1) / len(x))))


def write_histogram_csv(h: Histogram, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count", "density"])
        for left, right, count, dens in h.rows():
            w.writerow([repr(float(left)), repr(float(right)), count, repr(float(dens))])
    return path
