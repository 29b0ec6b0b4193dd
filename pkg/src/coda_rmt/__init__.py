"""Spectral theory of sample covariance matrices of high-dimensional
compositional data: Marchenko-Pastur limits, the CLT for linear spectral
statistics, and a seeded Monte-Carlo harness."""

__version__ = "0.1.0"

from .clt import (
    ContourCfg,
    LssLimit,
    lss_general_cov,
    lss_general_mean,
    lss_poly_cov,
    lss_poly_mean,
    resolvent_cov,
    resolvent_mean,
    standardize,
)
from .errors import DataError, NumericalError
from .moments import CltParams, DistSpec, MomentSet, builtin_moments, clt_params, parse_dist
from .mplaw import MpLaw, lsd_integral, mp_moment, stieltjes
from .spectra import Spectrum, eigenvalues_sym, spectrum
from .synth import compose, covariance, ingest_csv, sample_basis

__all__ = [
    "ContourCfg",
    "LssLimit",
    "lss_general_cov",
    "lss_general_mean",
    "lss_poly_cov",
    "lss_poly_mean",
    "resolvent_cov",
    "resolvent_mean",
    "standardize",
    "DataError",
    "NumericalError",
    "CltParams",
    "DistSpec",
    "MomentSet",
    "builtin_moments",
    "clt_params",
    "parse_dist",
    "MpLaw",
    "lsd_integral",
    "mp_moment",
    "stieltjes",
    "Spectrum",
    "eigenvalues_sym",
    "spectrum",
    "compose",
    "covariance",
    "ingest_csv",
    "sample_basis",
]
