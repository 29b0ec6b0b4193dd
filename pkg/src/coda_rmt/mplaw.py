"""The scaled Marchenko-Pastur law F^c with scale ``lam = sigma^2/mu^2``.

Besides density, CDF and moments this module provides the Stieltjes
transform ``m`` of F^c and ``mbar`` of the companion law
``(1 - c) delta_0 + c F^c``.  ``mbar`` is the root of

    lam z mbar^2 + (z + lam (1 - c)) mbar + 1 = 0,

obtained by clearing denominators in ``z = -1/mbar + c lam / (1 + lam mbar)``.
The discriminant factors as ``(z - a)(z - b)``, so taking
``sqrt(z - a) * sqrt(z - b)`` with principal roots gives the branch that is
analytic off the support and behaves like ``-1/z`` at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import NumericalError

__all__ = [
    "MpLaw",
    "StieltjesValue",
    "support",
    "density",
    "cdf",
    "mp_moment",
    "lsd_integral",
    "stieltjes",
    "companion",
]

_GL_X, _GL_W = leggauss(32)
# panel edges on [0, 1], graded toward 0: when a is tiny but positive the
# integrand in theta has a narrow feature of width ~sqrt(a / (b - a)) there
_PANELS = np.concatenate([[0.0], np.logspace(-8, 0, 17)])


def support(lam: float, c: float) -> tuple[float, float]:
    if lam <= 0 or c <= 0:
        raise ValueError("lam and c must be positive")
    r = math.sqrt(c)
    return float(lam * (1 - r) ** 2), float(lam * (1 + r) ** 2)


@dataclass(frozen=True)
class MpLaw:
    lam: float
    c: float

    def __post_init__(self):
        if not (self.lam > 0 and self.c > 0):
            raise ValueError("lam and c must be positive")

    @cached_property
    def edges(self) -> tuple[float, float]:
        return support(self.lam, self.c)

    @property
    def a(self) -> float:
        return self.edges[0]

    @property
    def b(self) -> float:
        return self.edges[1]

    @property
    def point_mass_at_zero(self) -> float:
        return max(0.0, 1.0 - 1.0 / self.c)

    def density(self, x):
        return density(x, self)

    def cdf(self, x):
        return cdf(x, self)

    def moment(self, r: int) -> float:
        return mp_moment(r, self)

    def stieltjes(self, z) -> "StieltjesValue":
        return stieltjes(z, self)

    def summary(self) -> dict:
        return {
            "lambda": float(self.lam),
            "c": float(self.c),
            "support": [self.a, self.b],
            "point_mass": self.point_mass_at_zero,
        }


def density(x, law: MpLaw):
    """Continuous part of F^c (the point mass at 0 for c > 1 is separate)."""
    x = np.asarray(x, dtype=float)
    a, b = law.edges
    inside = (x > a) & (x < b)
    xs = np.where(inside, x, 0.5 * (a + b))
    val = np.sqrt((b - xs) * (xs - a)) / (2 * np.pi * law.c * law.lam * xs)
    out = np.where(inside, val, 0.0)
    return out if out.ndim else float(out)


def _theta_weight(theta, law: MpLaw):
    """density(x) dx/dtheta under x = a + (b - a) sin^2(theta); smooth on [0, pi/2]."""
    a, b = law.edges
    s2 = np.sin(theta) ** 2
    x = a + (b - a) * s2
    return x, (b - a) ** 2 * 2 * s2 * (1 - s2) / (2 * np.pi * law.c * law.lam * x)


def cdf(x, law: MpLaw):
    x = np.asarray(x, dtype=float)
    a, b = law.edges
    pm = law.point_mass_at_zero
    theta = np.arcsin(np.sqrt(np.clip((x - a) / (b - a), 0.0, 1.0)))
    # composite Gauss-Legendre on [0, theta] for every point at once
    lo, hi = _PANELS[:-1], _PANELS[1:]
    t = (lo[:, None] + 0.5 * (hi - lo)[:, None] * (_GL_X + 1)).ravel()
    w = (0.5 * (hi - lo)[:, None] * _GL_W).ravel()
    with np.errstate(invalid="ignore", divide="ignore"):
        _, wgt = _theta_weight(theta[..., None] * t, law)
        cont = theta * np.sum(wgt * w, axis=-1)
    cont = np.where(x >= b, 1.0 - pm, np.where(x <= a, 0.0, cont))
    out = cont + np.where(x >= 0, pm, 0.0)
    return out if out.ndim else float(out)


def mp_moment(r: int, law: MpLaw) -> float:
    """``int x^r dF^c`` via the Narayana polynomial."""
    if r < 0 or int(r) != r:
        raise ValueError("r must be a non-negative integer")
    r = int(r)
    if r == 0:
        return 1.0
    total = sum(
        math.comb(r, k) * math.comb(r - 1, k) / (k + 1) * law.c**k for k in range(r)
    )
    return law.lam**r * total


def lsd_integral(f: Callable, law: MpLaw, epsabs: float = 1e-10, limit: int = 200) -> float:
    """``int f dF^c`` including the point mass at zero."""
    pm = law.point_mass_at_zero
    head = pm * float(f(0.0)) if pm > 0 else 0.0

    def integrand(theta):
        x, w = _theta_weight(theta, law)
        return float(f(x)) * w

    val, err = integrate.quad(integrand, 0.0, math.pi / 2, epsabs=epsabs, epsrel=1e-12, limit=limit)
    if not err <= max(epsabs, 1e-12 * abs(val)) * 10:
        raise NumericalError(f"quadrature did not converge (error estimate {err:.3g})")
    return head + val


@dataclass(frozen=True, eq=False)
class StieltjesValue:
    z: complex | np.ndarray
    m: complex | np.ndarray
    m_underline: complex | np.ndarray
    m_prime: complex | np.ndarray
    m_underline_prime: complex | np.ndarray


def companion(z, lam: float, c: float, check: bool = True):
    """``(mbar, mbar')`` at ``z`` (scalar or array), no validation of ``z``.

    ``check`` asserts the Herglotz sign ``Im mbar * Im z >= 0``.
    """
    z = np.asarray(z, dtype=complex)
    a, b = support(lam, c)
    s = np.sqrt(z - a) * np.sqrt(z - b)
    mb = -2.0 / (z + lam * (1 - c) + s)
    one = 1 + lam * mb
    mbp = (mb * one) ** 2 / (one**2 - c * lam**2 * mb**2)
    if check:
        bad = mb.imag * np.sign(z.imag) < -1e-9 * (1 + np.abs(mb))
        if np.any(bad):
            raise NumericalError("companion Stieltjes transform left the upper half-plane")
    return mb, mbp


def _validate_z(z, law: MpLaw):
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("z = 0 is excluded; use a point slightly off zero")
    a, b = law.edges
    on_support = (z.imag == 0) & (z.real >= a) & (z.real <= b)
    if np.any(on_support):
        raise ValueError("z lies on the support of the law")
    return z


def stieltjes(z, law: MpLaw) -> StieltjesValue:
    z = _validate_z(z, law)
    c = law.c
    mb, mbp = companion(z, law.lam, c)
    m = (mb + (1 - c) / z) / c
    mp = (mbp - (1 - c) / z**2) / c
    if z.ndim == 0:
        return StieltjesValue(complex(z), complex(m), complex(mb), complex(mp), complex(mbp))
    return StieltjesValue(z, m, mb, mp, mbp)
