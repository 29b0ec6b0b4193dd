"""Test of the i.i.d.-basis null for an observed composition table.

Under the null the rows of the table are normalized i.i.d. positive vectors
whose basis moments are known (built in or user supplied).  The statistic
``G_{p,N}(f)`` of the unbiased covariance is then asymptotically normal with
the limiting mean and variance of the LSS CLT, evaluated at ``c_N = p/(n-1)``.
A small p-value signals a departure from that null, e.g. dependence between
parts or a part with a different scale.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .clt import ContourCfg, lss_general_cov, lss_general_mean, lss_poly_cov, lss_poly_mean, standardize
from .moments import MomentSet, builtin_moments, clt_params
from .montecarlo import FUNCTIONS, Stat, g_statistic, parse_stat
from .mplaw import MpLaw
from .spectra import spectrum
from .synth import UNBIASED, CompositionMatrix

__all__ = ["TestReport", "parse_moments", "null_test"]


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    statistic: str
    g_value: float
    theo_mean: float
    theo_var: float
    z_score: float
    p_value: float
    moment_source: str
    n: int
    p: int
    c_N: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [0, 1]")
        if self.moment_source not in ("builtin", "user_supplied"):
            raise ValueError("moment_source must be 'builtin' or 'user_supplied'")

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(asdict(self), indent=indent)


def parse_moments(text: str) -> MomentSet:
    """``mu=...,sigma2=...,m3=...,mu4c=...`` (m3 raw, mu4c central)."""
    fields = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"malformed moment entry {item!r}")
        try:
            fields[key.strip()] = float(val)
        except ValueError:
            raise ValueError(f"malformed moment value {item!r}") from None
    missing = {"mu", "sigma2", "m3", "mu4c"} - fields.keys()
    extra = fields.keys() - {"mu", "sigma2", "m3", "mu4c"}
    if missing or extra:
        raise ValueError(f"moments need exactly mu, sigma2, m3, mu4c (missing {sorted(missing)}, extra {sorted(extra)})")
    return MomentSet(**fields)


def null_test(X: CompositionMatrix, stat="x2", moments: MomentSet | None = None,
              dist=None) -> TestReport:
    """Standardize ``G_{p,N}(f)`` of ``X`` under the i.i.d.-basis null."""
    if (moments is None) == (dist is None):
        raise ValueError("give exactly one moment source: moments or dist")
    s_ = parse_stat(stat) if isinstance(stat, str) else stat
    if s_.is_complex:
        raise ValueError("the null test uses a real statistic")
    n, p = X.values.shape
    if n < 3 or p < 3:
        raise ValueError("need n >= 3 and p >= 3")
    source = "user_supplied" if moments is not None else "builtin"
    ms = moments if moments is not None else builtin_moments(dist)
    c_N = p / (n - 1)
    params = clt_params(ms, c_N)
    law = MpLaw(ms.lam, c_N)
    spec = spectrum(X, UNBIASED)
    mean, var = _theory(s_, params)
    f = s_.r if s_.kind == "poly" else FUNCTIONS[s_.name]
    g = g_statistic(spec, f, law)
    z, pv = standardize(g, mean, var)
    return TestReport(s_.label, g, mean, var, z, pv, source, n, p, c_N)


def _theory(s: Stat, params) -> tuple[float, float]:
    if s.kind == "poly":
        mean = lss_poly_mean(s.r, params) if s.r <= 3 else None
        var = lss_poly_cov(s.r, s.r, params)
        if mean is not None:
            return mean, var
        fn = lambda z, r=s.r: z**r  # noqa: E731
    else:
        fn = FUNCTIONS[s.name]
        var = None
    contour = ContourCfg.default(params)
    mean = lss_general_mean(fn, params, contour)
    if var is None:
        var = lss_general_cov(fn, fn, params, contour)
    return mean, var
