"""Limiting mean and covariance of linear spectral statistics.

Two independent routes are provided:

* closed forms for monomials (``lss_poly_mean`` for r <= 3 and the general
  double sum ``lss_poly_cov``), and
* contour integrals of the resolvent-process mean and covariance kernels
  (``lss_general_mean`` / ``lss_general_cov``) valid for any f analytic on a
  neighbourhood of the contour's interior.

Contours are rectangles ``[x_l, x_r] x [-v0, v0]`` integrated edge by edge
with Gauss-Legendre nodes; the integrands are analytic along the contour so
the rule converges geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericalError
from .moments import CltParams
from .mplaw import MpLaw, _validate_z, companion

__all__ = [
    "ContourCfg",
    "LssLimit",
    "lss_poly_mean",
    "lss_poly_cov",
    "resolvent_mean",
    "resolvent_cov",
    "lss_general_mean",
    "lss_general_cov",
    "lss_limit",
    "standardize",
    "normal_sf2",
]


@dataclass(frozen=True)
class ContourCfg:
    x_l: float
    x_r: float
    v0: float
    nodes_per_edge: int = 512
    second_contour_scale: float = 1.5

    def __post_init__(self):
        if not self.x_l < self.x_r:
            raise ValueError("need x_l < x_r")
        if self.v0 <= 0:
            raise ValueError("v0 must be positive")
        if self.nodes_per_edge < 16:
            raise ValueError("nodes_per_edge must be >= 16")
        if self.second_contour_scale <= 1:
            raise ValueError("second_contour_scale must exceed 1")

    @classmethod
    def default(cls, params: CltParams, **overrides) -> "ContourCfg":
        """Rectangle with margins 0.5*lam around the support, always enclosing 0.

        For c < 1 the resolvent mean has a pole at 0 carrying the structural
        zero eigenvalue, so 0 must lie inside for f with f(0) != 0.
        """
        lam = params.lam
        a, b = MpLaw(lam, params.c).edges
        kw = dict(x_l=min(a - max(0.5, 0.5 * lam), -0.5 * lam), x_r=b + 0.5 * lam, v0=0.5 * lam)
        kw.update(overrides)
        return cls(**kw)

    def scaled(self, s: float) -> "ContourCfg":
        mid = 0.5 * (self.x_l + self.x_r)
        return ContourCfg(
            mid - s * (mid - self.x_l), mid + s * (self.x_r - mid), s * self.v0,
            self.nodes_per_edge, self.second_contour_scale,
        )

    def check_encloses(self, law: MpLaw):
        if not (self.x_l < law.a and self.x_r > law.b):
            raise ValueError(
                f"contour [{self.x_l}, {self.x_r}] does not enclose the support "
                f"[{law.a}, {law.b}]"
            )

    def upper_nodes(self):
        """Nodes and weights of the upper half, traversed counter-clockwise
        from ``x_r`` up, across, and down to ``x_l``."""
        x, w = leggauss(self.nodes_per_edge)
        t = 0.5 * (x + 1)
        w = 0.5 * w
        xl, xr, v0 = self.x_l, self.x_r, self.v0
        z = np.concatenate([xr + 1j * v0 * t, xr + (xl - xr) * t + 1j * v0, xl + 1j * v0 * (1 - t)])
        dz = np.concatenate([1j * v0 * w, (xl - xr) * w + 0j, -1j * v0 * w])
        return z, dz


@dataclass(frozen=True)
class LssLimit:
    mean: float
    variance: float


def lss_poly_mean(r: int, params: CltParams) -> float:
    lam, c, h1, xi = params.lam, params.c, params.h1, params.xi
    if r == 1:
        return h1
    if r == 2:
        return (1 + c) * lam**2 + 2 * (1 + c) * lam * h1 + c * xi
    if r == 3:
        return (
            (2 + 6 * c + 3 * c**2) * lam**3
            + 3 * (1 + 3 * c + c**2) * lam**2 * h1
            + 3 * c * (1 + c) * lam * xi
        )
    raise ValueError("closed-form mean only for r in {1, 2, 3}; use lss_general_mean")


def lss_poly_cov(r1: int, r2: int, params: CltParams) -> float:
    """Limiting ``Cov(G(x^r1), G(x^r2))``.

    First term: the Gaussian part of the kernel.  Second term: the product of
    the single residues ``(1/lam)(lam c)^r sum_k ...`` times ``c xi``.
    """
    if r1 < 1 or r2 < 1:
        raise ValueError("degrees must be >= 1")
    if r1 > 30 or r2 > 30:
        raise OverflowError("degree above 30 loses all precision in floating point")
    lam, c, xi = params.lam, params.c, params.xi
    q = (1 - c) / c
    comb = math.comb
    first = 0.0
    for k1 in range(r1):
        for k2 in range(r2 + 1):
            inner = sum(
                l * comb(2 * r1 - 1 - (k1 + l), r1 - 1) * comb(2 * r2 - 1 - k2 + l, r2 - 1)
                for l in range(1, r1 - k1 + 1)
            )
            first += comb(r1, k1) * comb(r2, k2) * q ** (k1 + k2) * inner
    first *= 2 * (lam * c) ** (r1 + r2)

    def single(r):
        return sum(comb(r, k) * q**k * comb(2 * r - k, r - 1) for k in range(r + 1))

    second = c / lam**2 * xi * (lam * c) ** (r1 + r2) * single(r1) * single(r2)
    return first + second


def _mean_kernel(z, params: CltParams, mb, mbp):
    lam, c, h1, xi = params.lam, params.c, params.h1, params.xi
    m = (mb + (1 - c) / z) / c
    mp = (mbp - (1 - c) / z**2) / c
    one = 1 + lam * mb
    den = 1 - c * lam**2 * mb**2 / one**2
    if np.any(np.abs(den) < 1e-10):
        raise NumericalError("z too close to a support edge (vanishing denominator)")
    bracket = (
        -z * mb / one * (h1 * m + lam * m + lam / z)
        - c * z**2 * mb**2 / one * (xi * m**2 + 2 * lam**2 * mp)
        + c * lam**2 * mb**2 / one**3 / den
    )
    return -mb / den * bracket


def resolvent_mean(z, params: CltParams):
    """Limiting mean of ``M_p(z) = tr(B - zI)^{-1} - p m_{F^{c}}(z)``."""
    law = MpLaw(params.lam, params.c)
    z = _validate_z(z, law)
    mb, mbp = companion(z, params.lam, params.c)
    out = _mean_kernel(z, params, mb, mbp)
    return complex(out) if out.ndim == 0 else out


def _cov_kernel(z1, z2, params, mb1, mbp1, mb2, mbp2):
    lam, c, xi = params.lam, params.c, params.xi
    return 2 * (mbp1 * mbp2 / (mb1 - mb2) ** 2 - 1 / (z1 - z2) ** 2) + c * xi * mbp1 * mbp2 / (
        (1 + lam * mb1) ** 2 * (1 + lam * mb2) ** 2
    )


def resolvent_cov(z1, z2, params: CltParams):
    """Limiting (non-conjugated) covariance ``Cov(M(z1), M(z2))``."""
    law = MpLaw(params.lam, params.c)
    z1 = _validate_z(z1, law)
    z2 = _validate_z(z2, law)
    if np.any(np.abs(z1 - z2) < 1e-6):
        raise ValueError("coincident points: the covariance kernel needs |z1 - z2| >= 1e-6")
    mb1, mbp1 = companion(z1, params.lam, params.c)
    mb2, mbp2 = companion(z2, params.lam, params.c)
    out = _cov_kernel(z1, z2, params, mb1, mbp1, mb2, mbp2)
    return complex(out) if np.ndim(out) == 0 else out


def _eval_f(f, z):
    v = np.asarray(f(z), dtype=complex)
    return np.broadcast_to(v, z.shape)


def _check_real_symmetric(f, z, fz, name="f"):
    fl = _eval_f(f, np.conj(z))
    scale = max(1.0, float(np.max(np.abs(fz))))
    if np.max(np.abs(fl - np.conj(fz))) > 1e-8 * scale:
        raise ValueError(f"{name} must be real on the real axis (f(conj z) = conj f(z))")
    return fl


def lss_general_mean(f: Callable, params: CltParams, contour: ContourCfg | None = None) -> float:
    """Limiting mean ``-(1/2 pi i) \\oint f(z) E M(z) dz``.

    ``f`` must accept complex arrays.  The kernel is computed on the upper
    half of the contour only and reflected; ``f`` is evaluated on both halves
    so that a non-vanishing imaginary residue is caught.
    """
    contour = contour or ContourCfg.default(params)
    law = MpLaw(params.lam, params.c)
    contour.check_encloses(law)
    z, dz = contour.upper_nodes()
    mb, mbp = companion(z, params.lam, params.c)
    kern = _mean_kernel(z, params, mb, mbp)
    fu = _eval_f(f, z)
    fl = _eval_f(f, np.conj(z))
    # lower half: z -> conj z, traversed in the opposite direction
    total = np.sum(fu * kern * dz) - np.sum(fl * np.conj(kern) * np.conj(dz))
    result = -total / (2j * math.pi)
    if abs(result.imag) > 1e-8 * max(1.0, abs(result.real)):
        raise NumericalError(f"imaginary residue {result.imag:.3g} in the contour mean")
    return float(result.real)


def lss_general_cov(f: Callable, g: Callable, params: CltParams,
                    contour: ContourCfg | None = None) -> float:
    """Limiting ``Cov(X_f, X_g) = -(1/4 pi^2) \\oint\\oint f g Cov(M(z1), M(z2)) dz1 dz2``.

    ``z2`` runs over the first contour scaled by ``second_contour_scale`` so
    the two never meet.  By conjugate symmetry the full double integral is
    ``2 Re(UU + UL)`` over upper/lower halves.
    """
    contour = contour or ContourCfg.default(params)
    law = MpLaw(params.lam, params.c)
    contour.check_encloses(law)
    z1, w1 = contour.upper_nodes()
    z2, w2 = contour.scaled(contour.second_contour_scale).upper_nodes()
    f1 = _eval_f(f, z1)
    g2 = _eval_f(g, z2)
    _check_real_symmetric(f, z1, f1, "f")
    g2l = _check_real_symmetric(g, z2, g2, "g")
    mb1, mbp1 = companion(z1, params.lam, params.c)
    mb2, mbp2 = companion(z2, params.lam, params.c)
    a = (f1 * w1)[:, None]
    upper = _cov_kernel(z1[:, None], z2[None, :], params, mb1[:, None], mbp1[:, None],
                        mb2[None, :], mbp2[None, :])
    uu = np.sum(a * upper * (g2 * w2)[None, :])
    lower = _cov_kernel(z1[:, None], np.conj(z2)[None, :], params, mb1[:, None], mbp1[:, None],
                        np.conj(mb2)[None, :], np.conj(mbp2)[None, :])
    ul = np.sum(a * lower * (g2l * -np.conj(w2))[None, :])
    total = 2 * (uu + ul).real
    return float(-total / (4 * math.pi**2))


def lss_limit(f: Callable, params: CltParams, contour: ContourCfg | None = None) -> LssLimit:
    return LssLimit(lss_general_mean(f, params, contour), lss_general_cov(f, f, params, contour))


def normal_sf2(z: float) -> float:
    """Two-sided tail ``2 (1 - Phi(|z|))``."""
    return math.erfc(abs(z) / math.sqrt(2))


def standardize(g_value: float, mean: float, variance: float) -> tuple[float, float]:
    if not variance > 0:
        raise ValueError("variance must be positive")
    z = (g_value - mean) / math.sqrt(variance)
    return z, normal_sf2(z)
