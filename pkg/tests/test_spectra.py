import math

import mpmath
import numpy as np
import pytest

from coda_rmt.errors import NumericalError
from coda_rmt.spectra import (
    Spectrum,
    eigenvalues_sym,
    esd_histogram,
    extremes,
    ks_distance,
    spectrum,
    write_histogram_csv,
)
from coda_rmt.synth import CENTERED, UNBIASED, compose, covariance, sample_basis


def test_diagonal():
    assert list(eigenvalues_sym(np.diag([3.0, 1.0, 2.0]))) == [3, 2, 1]


def test_rank_one_toy():
    w = eigenvalues_sym([[0.125, -0.125], [-0.125, 0.125]])
    assert w == pytest.approx([0.25, 0], abs=1e-15)


def test_random_symmetric_vs_high_precision(rng):
    A = rng.standard_normal((8, 8))
    A = A + A.T
    oracle = sorted((float(x) for x in mpmath.eigsy(mpmath.matrix(A.tolist()), eigvals_only=True)), reverse=True)
    assert np.allclose(eigenvalues_sym(A), oracle, rtol=0, atol=1e-9)


def test_rejects_non_symmetric():
    with pytest.raises(ValueError):
        eigenvalues_sym([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        eigenvalues_sym(np.ones((2, 3)))


def test_solver_failure_maps_to_numerical_error():
    with pytest.raises((NumericalError, ValueError)):
        eigenvalues_sym(np.full((3, 3), np.nan))


def test_toy_spectrum():
    s = spectrum(compose(np.array([[1.0, 1.0], [1.0, 3.0]])), UNBIASED)
    assert s.values == pytest.approx([0.25, 0], abs=1e-15)
    assert s.structural_zero_count == 1
    assert extremes(s) == pytest.approx((0.25, 0.25))


def test_routes_agree_on_tall_instance():
    X = compose(sample_basis("exp:1", 10, 6, 3))
    a = spectrum(X, UNBIASED, route="direct")
    b = spectrum(X, UNBIASED, route="gram")
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-9 * a.values[0])


@pytest.mark.parametrize("n,p", [(10, 6), (6, 10), (20, 20), (5, 40)])
@pytest.mark.parametrize("kind", [UNBIASED, CENTERED])
def test_structural_zero_count(n, p, kind):
    X = compose(sample_basis("chisq:2", n, p, n * p))
    s = spectrum(X, kind)
    assert len(s.values) == p
    assert np.all(np.diff(s.values) <= 0)
    # centered construct keeps the sample-mean direction
    rank = min(n - 1, p - 1) if kind == UNBIASED else min(n, p - 1)
    assert s.structural_zero_count == p - rank


def test_gram_direct_sweep():
    for n in (3, 17, 64):
        for p in (3, 33, 64):
            X = compose(sample_basis("exp:2", n, p, 1000 + n + p))
            a = spectrum(X, UNBIASED, route="direct").values
            b = spectrum(X, UNBIASED, route="gram").values
            assert np.max(np.abs(a - b)) <= 1e-8 * a[0]


def test_trace_conservation(rng):
    for _ in range(10):
        X = compose(rng.exponential(size=(int(rng.integers(3, 50)), int(rng.integers(3, 50)))))
        B = covariance(X, UNBIASED)
        assert math.isclose(spectrum(B).values.sum(), np.trace(B.values), rel_tol=1e-8)
        assert math.isclose(spectrum(X, UNBIASED).values.sum(), np.trace(B.values), rel_tol=1e-8)


def test_spectrum_requires_kind_for_compositions():
    X = compose(np.ones((3, 3)) + np.eye(3))
    with pytest.raises(ValueError):
        spectrum(X)
    with pytest.raises(ValueError):
        spectrum(covariance(X, UNBIASED), CENTERED)


def test_histogram_properties():
    s = Spectrum.from_values([3.0, 2.0, 2.0, 1.0, 0.0, 0.0])
    h = esd_histogram(s, 4, include_zeros=True)
    assert h.counts.sum() == 6
    assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1, abs=1e-12)
    assert esd_histogram(s, 4).counts.sum() == 4
    same = esd_histogram(Spectrum.from_values([1.0, 1.0, 1.0]), 5)
    assert np.count_nonzero(same.counts) == 1
    with pytest.raises(ValueError):
        esd_histogram(Spectrum.from_values([0.0, 0.0]), 3)
    with pytest.raises(ValueError):
        esd_histogram(s, 0)


def test_histogram_csv(tmp_path):
    h = esd_histogram(Spectrum.from_values([1.0, 2.0, 3.0]), 2)
    text = write_histogram_csv(h, tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == "bin_left,bin_right,count,density"
    assert len(text) == 3


def test_histogram_tracks_density():
    from coda_rmt.mplaw import MpLaw

    law = MpLaw(1.0, 1.0)
    s = spectrum(compose(sample_basis("exp:5", 500, 500, 42)), UNBIASED)
    h = esd_histogram(s, 60)
    # bin-averaged density, exact through the CDF (the midpoint misses the 1/sqrt(x) edge)
    expected = np.diff(law.cdf(h.edges)) / np.diff(h.edges)
    assert np.max(np.abs(h.density - expected)) < 0.15


def test_extremes_requires_nonzero():
    with pytest.raises(ValueError):
        extremes(Spectrum.from_values([0.0, 0.0]))


def test_edges_exp_ten_seeds():
    for seed in range(10):
        s = spectrum(compose(sample_basis("exp:5", 500, 500, seed)), UNBIASED)
        lmax, lmin = extremes(s)
        assert abs(lmax - 4) < 0.25
        assert lmin < 0.1


def test_edge_chisq():
    s = spectrum(compose(sample_basis("chisq:1", 800, 500, 5)), UNBIASED)
    assert abs(extremes(s)[0] - 2 * (1 + math.sqrt(500 / 800)) ** 2) < 0.3


def test_edge_convergence_is_monotone():
    med = []
    for n in (100, 200, 400, 800):
        d = [abs(spectrum(compose(sample_basis("exp:5", n, n, 10_000 + k)), UNBIASED).values[0] - 4)
             for k in range(20)]
        med.append(np.median(d))
    assert all(a > b for a, b in zip(med, med[1:]))


def test_ks_distance_uniform():
    x = (np.arange(10) + 0.5) / 10
    assert ks_distance(x, lambda t: t) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        ks_distance([], lambda t: t)
