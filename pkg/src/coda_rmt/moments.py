"""Base-distribution moments and the scalar CLT constants derived from them.

The compositional CLT depends on the basis distribution only through
``mu``, ``sigma2``, the raw third moment ``E w^3`` and the central fourth
moment ``E (w - mu)^4``.  From those we build

* ``lam = sigma2 / mu^2``, the scale of the limiting Marchenko-Pastur law,
* ``h1``, ``h2``: the O(1/p) corrections of the ratio moments nu_2, nu_12,
* ``alpha1``, ``alpha2`` and ``xi = alpha1 + alpha2`` entering the mean and
  covariance of the limiting Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

__all__ = [
    "DistSpec",
    "MomentSet",
    "CltParams",
    "RatioMoments",
    "parse_dist",
    "builtin_moments",
    "clt_params",
    "empirical_ratio_moments",
]

_FAMILIES = {"exp": 1, "chisq": 1, "pois": 1, "tnorm": 4}


@dataclass(frozen=True)
class DistSpec:
    """A basis distribution, e.g. ``exp:5`` or ``tnorm:0:1:0:10``."""

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(
                f"unsupported distribution family {self.family!r}; "
                f"expected one of {sorted(_FAMILIES)}"
            )
        if len(self.params) != _FAMILIES[self.family]:
            raise ValueError(
                f"{self.family} takes {_FAMILIES[self.family]} parameter(s), "
                f"got {len(self.params)}"
            )
        if not all(math.isfinite(v) for v in self.params):
            raise ValueError(f"non-finite parameter in {self}")
        if self.family == "exp" and self.params[0] <= 0:
            raise ValueError("exponential rate must be positive")
        if self.family == "chisq" and self.params[0] < 1:
            raise ValueError("chi-square degrees of freedom must be >= 1")
        if self.family == "pois" and self.params[0] <= 0:
            raise ValueError("Poisson mean must be positive")
        if self.family == "tnorm":
            _, var, lo, hi = self.params
            if var <= 0:
                raise ValueError("truncated normal variance must be positive")
            if lo < 0:
                raise ValueError("truncated normal needs lo >= 0 (positive basis)")
            if not lo < hi:
                raise ValueError("truncated normal needs lo < hi")

    def __str__(self):
        return ":".join([self.family] + [f"{v:g}" for v in self.params])


def parse_dist(text: str | DistSpec) -> DistSpec:
    """Parse ``exp:<rate>``, ``chisq:<k>``, ``pois:<lambda>`` or
    ``tnorm:<mean>:<var>:<lo>:<hi>``."""
    if isinstance(text, DistSpec):
        return text
    family, *rest = text.strip().split(":")
    try:
        params = tuple(float(v) for v in rest)
    except ValueError:
        raise ValueError(f"malformed distribution spec {text!r}") from None
    return DistSpec(family.lower(), params)


@dataclass(frozen=True)
class MomentSet:
    mu: float
    sigma2: float
    m3: float
    mu4c: float

    def __post_init__(self):
        for name in ("mu", "sigma2", "m3", "mu4c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        # Jensen: E(w-mu)^4 >= (E(w-mu)^2)^2, with slack for rounding.
        if self.mu4c < self.sigma2**2 * (1 - 1e-12):
            raise ValueError("mu4c must be at least sigma2**2")

    @property
    def lam(self) -> float:
        return self.sigma2 / self.mu**2


@dataclass(frozen=True)
class CltParams:
    lam: float
    c: float
    h1: float
    h2: float
    alpha1: float
    alpha2: float
    xi: float = field(init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        object.__setattr__(self, "xi", self.alpha1 + self.alpha2)

    def with_c(self, c: float) -> "CltParams":
        """Same basis constants at another ratio (h1, h2, alphas do not depend on c)."""
        return CltParams(self.lam, c, self.h1, self.h2, self.alpha1, self.alpha2)


@dataclass(frozen=True)
class RatioMoments:
    nu2: float
    nu4: float
    nu12: float
    sample_count: int


def _tnorm_moments(mean, var, lo, hi) -> MomentSet:
    sd = math.sqrt(var)
    mass = special.ndtr((hi - mean) / sd) - special.ndtr((lo - mean) / sd)
    if mass <= 0:
        raise ValueError("truncation interval carries no probability")

    def raw(k):
        val, _ = integrate.quad(
            lambda x: x**k * math.exp(-0.5 * ((x - mean) / sd) ** 2),
            lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200,
        )
        return val / (sd * math.sqrt(2 * math.pi) * mass)

    m1, m2, m3, m4 = (raw(k) for k in range(1, 5))
    mu4c = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
    return MomentSet(mu=m1, sigma2=m2 - m1**2, m3=m3, mu4c=mu4c)


def builtin_moments(dist: str | DistSpec) -> MomentSet:
    """Exact moments of a supported basis distribution.

    Truncated normal moments are integrated numerically; everything else is
    closed form.  For ``pois`` these are the untruncated Poisson moments even
    though the sampler redraws zeros (P(0) is negligible for the intended
    means).
    """
    d = parse_dist(dist)
    if d.family == "exp":
        (rate,) = d.params
        s = 1.0 / rate
        return MomentSet(mu=s, sigma2=s**2, m3=6 * s**3, mu4c=9 * s**4)
    if d.family == "chisq":
        (k,) = d.params
        # cumulants 2^(r-1) (r-1)! k
        return MomentSet(
            mu=k, sigma2=2 * k, m3=k * (k + 2) * (k + 4), mu4c=48 * k + 12 * k**2
        )
    if d.family == "pois":
        (lam,) = d.params
        return MomentSet(
            mu=lam, sigma2=lam, m3=lam**3 + 3 * lam**2 + lam, mu4c=lam + 3 * lam**2
        )
    return _tnorm_moments(*d.params)


def clt_params(ms: MomentSet, c: float) -> CltParams:
    lam = ms.lam
    r3 = ms.m3 / ms.mu**3
    h1 = -2 * r3 + 3 * lam**2 + 5 * lam + 2
    h2 = -8 * lam * r3 + 10 * lam**3 + 22 * lam**2 + 8 * lam
    alpha1 = ms.mu4c / ms.mu**4 - 3 * lam**2
    alpha2 = h2 - 2 * lam * h1
    return CltParams(lam=lam, c=float(c), h1=h1, h2=h2, alpha1=alpha1, alpha2=alpha2)


def empirical_ratio_moments(X) -> RatioMoments:
    """Plug-in estimates of nu_2, nu_4, nu_12 from a composition matrix.

    With ``v = p * x`` (so ``v_ij = w_ij / wbar_i``), nu_12 is estimated per
    row from power sums, avoiding the O(p^2) pair loop.
    """
    x = np.asarray(getattr(X, "values", X), dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("expected a non-empty n x p matrix")
    n, p = x.shape
    if p < 2:
        raise ValueError("nu12 needs p >= 2")
    d = p * x - 1.0
    d2 = d * d
    d4 = d2 * d2
    s2 = d2.sum(axis=1)
    s4 = d4.sum(axis=1)
    nu12 = np.mean((s2 * s2 - s4) / (p * (p - 1)))
    return RatioMoments(
        nu2=float(d2.mean()), nu4=float(d4.mean()), nu12=float(nu12), sample_count=n
    )
