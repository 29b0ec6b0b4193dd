import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coda_rmt import montecarlo
from coda_rmt.errors import NumericalError
from coda_rmt.montecarlo import (
    ExperimentCfg,
    MomentAccumulator,
    Stat,
    g_statistic,
    m_statistic,
    parse_complex,
    parse_pair,
    parse_ratio,
    parse_stat,
    run_experiment,
    run_lsd_figure,
    split_pairs,
    write_samples_csv,
)
from coda_rmt.mplaw import MpLaw, mp_moment, stieltjes
from coda_rmt.spectra import Spectrum, spectrum
from coda_rmt.synth import UNBIASED, compose


@pytest.mark.parametrize("text,z", [("-3+2i", -3 + 2j), ("3", 3), ("2i", 2j), ("-i", -1j), ("+1.5-0.25i", 1.5 - 0.25j),
                                    ("1e-1+1E1i", 0.1 + 10j), (" 5+1i ", 5 + 1j)])
def test_parse_complex(text, z):
    assert parse_complex(text) == z


@pytest.mark.parametrize("text", ["", "i3", "3+2", "32i+1", "1+2j", "1++2i", "abc", "3 2i", "5 + 1i", "1i2"])
def test_parse_complex_rejects(text):
    with pytest.raises(ValueError):
        parse_complex(text)


def test_parse_stats_and_pairs():
    assert parse_stat("x") == Stat("poly", r=1)
    assert parse_stat("x3").r == 3 and parse_stat("x^4").r == 4
    assert parse_stat("exp").label == "exp"
    assert parse_stat("m(-3+2i)").z == -3 + 2j
    assert parse_stat("m(-3+2i)").label == "m(-3+2i)"
    with pytest.raises(ValueError):
        parse_stat("log")
    a, b = parse_pair("(-3+2i,-1+1i)")
    assert (a.z, b.z) == (-3 + 2j, -1 + 1j)
    assert parse_pair("(x,x2)")[1].r == 2
    with pytest.raises(ValueError):
        parse_pair("(x,-1+1i)")
    assert split_pairs("(-3+2i,-1+1i),(3+2i,5+1i)") == ["(-3+2i,-1+1i)", "(3+2i,5+1i)"]


def test_parse_ratio():
    assert parse_ratio("3/4") == Fraction(3, 4)
    assert parse_ratio("0.75") == Fraction(3, 4)
    for bad in ("0", "-1", "x", "1/0"):
        with pytest.raises(ValueError):
            parse_ratio(bad)


def test_cfg_validation():
    with pytest.raises(ValueError):
        ExperimentCfg("exp:5", (50,), "1", 0, 1, ("x",))
    with pytest.raises(ValueError):
        ExperimentCfg("exp:5", (50,), "1", 10, 1, ())
    with pytest.raises(ValueError):
        ExperimentCfg("exp:5", (2,), "1", 10, 1, ("x",))
    with pytest.raises(ValueError):
        ExperimentCfg("exp:5", (50,), "1", 10, 1, ("x",), centering="other")
    cfg = ExperimentCfg("exp:5", (45,), "0.7", 10, 1, ("x",))
    assert cfg.p_for(45) == 32
    assert cfg.to_dict()["p_rounded"] == {"45": 32}


def test_g_statistic_toy():
    s = Spectrum.from_values([0.25, 0.0])
    law = MpLaw(1.0, 2.0)  # c_N = p / (n - 1) = 2
    assert g_statistic(s, 1, law) == pytest.approx(0.25 - 2 * mp_moment(1, law))
    assert g_statistic(s, 1, law) == pytest.approx(-1.75)
    assert g_statistic(s, lambda x: np.ones_like(x), law) == pytest.approx(0, abs=1e-10)
    assert g_statistic(s, lambda x: x**2, law) == pytest.approx(g_statistic(s, 2, law), abs=1e-9)


def test_m_statistic():
    s = Spectrum.from_values([3.0, 1.0, 0.5])
    law = MpLaw(1.0, 0.5)
    z = -1 + 2j
    v = m_statistic(s, z, law)
    assert v == pytest.approx(sum(1 / (x - z) for x in (3.0, 1.0, 0.5)) - 3 * stieltjes(z, law).m)
    assert m_statistic(s, z.conjugate(), law) == pytest.approx(v.conjugate())
    with pytest.raises(NumericalError):
        m_statistic(s, 1.0 + 0j, law)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 300), st.lists(st.integers(1, 299), max_size=8))
def test_merge_associativity(seed, n, cuts):
    data = np.random.default_rng(seed).standard_normal((n, 3)) * [1, 1e3, 1e-3] + [1e4, 0, -5]
    whole = MomentAccumulator(3).extend(data)
    cuts = sorted({c for c in cuts if c < n})
    merged = MomentAccumulator(3)
    for chunk in np.split(data, cuts):
        merged = merged.merge(MomentAccumulator(3).extend(chunk))
    assert merged.count == whole.count
    assert np.allclose(merged.mean, whole.mean, rtol=1e-12, atol=1e-12 * 1e4)
    # the 1e4 offset costs a few digits to cancellation
    if n > 2:
        scale = np.sqrt(np.outer(np.diag(whole.cov()), np.diag(whole.cov())))
        assert np.max(np.abs(merged.cov() - whole.cov()) / scale) < 1e-10


def test_accumulator_matches_numpy(rng):
    x = rng.standard_normal((50, 4))
    acc = MomentAccumulator(4).extend(x)
    assert np.allclose(acc.mean, x.mean(axis=0), rtol=1e-14)
    assert np.allclose(acc.cov(), np.cov(x.T), rtol=1e-12)


@pytest.fixture(scope="module")
def small_cfg():
    return ExperimentCfg("exp:5", (30, 40), "3/4", 24, 7, ("x", "x2", "exp", "m(-3+2i)"),
                         ("(x,x2)", "(-3+2i,-1+1i)"))


def test_report_is_deterministic(small_cfg):
    a = run_experiment(small_cfg).to_json()
    b = run_experiment(small_cfg).to_json()
    assert a == b


def test_report_invariant_to_workers(small_cfg):
    serial = run_experiment(small_cfg)
    par = run_experiment(ExperimentCfg(**{**small_cfg.__dict__, "workers": 3}))
    assert serial.to_json() == par.to_json()
    assert np.array_equal(serial.samples[30], par.samples[30])


def test_report_schema(small_cfg):
    doc = json.loads(run_experiment(small_cfg).to_json())
    assert set(doc) == {"config", "rows", "failures"}
    keys = {"n", "p", "stat", "emp_mean", "emp_var", "theo_mean", "theo_var", "se_mean", "reps"}
    assert all(set(r) == keys for r in doc["rows"])
    stats_seen = {(r["n"], r["stat"]) for r in doc["rows"]}
    assert (30, "cov(m(-3+2i),m(-1+1i))") in stats_seen
    m_row = next(r for r in doc["rows"] if r["stat"] == "m(-3+2i)")
    assert len(m_row["emp_mean"]) == 2 and m_row["theo_var"] is None
    x_row = next(r for r in doc["rows"] if r["stat"] == "x")
    assert x_row["se_mean"] == pytest.approx(np.sqrt(x_row["emp_var"] / x_row["reps"]))
    assert x_row["theo_mean"] == -2.0 and x_row["p"] == 22


def test_rows_match_direct_computation():
    cfg = ExperimentCfg("chisq:1", (20,), "1", 6, 3, ("x2", "m(1+1i)"))
    rep = run_experiment(cfg)
    direct = []
    for k in range(6):
        s = spectrum(compose(montecarlo.sample_basis("chisq:1", 20, 20, montecarlo.make_rng(3, 20, k))), UNBIASED)
        law = MpLaw(2.0, 20 / 19)
        direct.append((g_statistic(s, 2, law), m_statistic(s, 1 + 1j, law)))
    g = np.array([d[0] for d in direct])
    m = np.array([d[1] for d in direct])
    assert np.allclose(rep.values(20, "x2"), g, rtol=1e-12)
    assert np.allclose(rep.values(20, "m(1+1i)"), m, rtol=1e-12)
    row = rep.row(20, "x2")
    assert row.emp_var == pytest.approx(np.var(g, ddof=1), rel=1e-10)
    mrow = rep.row(20, "m(1+1i)")
    assert mrow.emp_var == pytest.approx(np.sum((m - m.mean()) ** 2) / 5, rel=1e-10)


def test_failures_are_reported(monkeypatch):
    real = montecarlo.spectrum

    def flaky(X, kind):
        s = real(X, kind)
        if abs(s.values[0] - flaky.target) < 1e-15:
            raise NumericalError("injected")
        return s

    cfg = ExperimentCfg("exp:5", (20,), "1", 5, 11, ("x",))
    first = real(compose(montecarlo.sample_basis("exp:5", 20, 20, montecarlo.make_rng(11, 20, 2))), UNBIASED)
    flaky.target = first.values[0]
    monkeypatch.setattr(montecarlo, "spectrum", flaky)
    rep = run_experiment(cfg)
    assert rep.failures == [{"n": 20, "rep": 2, "error": "NumericalError: injected"}]
    assert rep.row(20, "x").reps == 4


def test_theory_columns_chisq_block():
    cfg = ExperimentCfg("chisq:1", (100, 200, 300, 400), "3/4", 2, 1, ("x", "x2", "x3"))
    rep = run_experiment(cfg)
    for n in cfg.n_list:
        got = [(rep.row(n, s).theo_mean, rep.row(n, s).theo_var) for s in ("x", "x2", "x3")]
        assert got == pytest.approx([(-6, 18), (-23, 918), (-83, 41806.125)], abs=1e-8)


def test_exp_theory_at_every_n():
    rep = run_experiment(ExperimentCfg("exp:5", (20, 40), "1", 3, 1, ("x",)))
    assert [r.theo_mean for r in rep.rows] == [-2.0, -2.0]


def test_dump_and_samples(tmp_path):
    cfg = ExperimentCfg("exp:5", (12,), "1", 3, 1, ("x",), dump_dir=str(tmp_path / "d"))
    rep = run_experiment(cfg)
    assert len(list((tmp_path / "d").glob("*.npy"))) == 3
    path = write_samples_csv(rep.normalized(12, "x"), tmp_path / "n.csv")
    assert len(path.read_text().split()) == 3
    with pytest.raises(ValueError):
        ExperimentCfg("exp:5", (12,), "1", 3, 1, ("m(1+1i)",))
        rep.normalized(12, "m(1+1i)")


def test_anderson_darling_screen(exp400_report):
    # scipy's table tops out at 1%, stricter than a 0.1% screen
    for stat in ("x", "x2", "x3"):
        res = stats.anderson(exp400_report.normalized(400, stat))
        assert res.statistic < res.critical_values[-1]


def test_lsd_figure_runs():
    fig = run_lsd_figure("exp:5", 500, 500, 42)
    assert fig.ks < 0.08
    assert len(fig.grid) == 512 and len(fig.density) == 512
    s = fig.summary()
    assert s["support"] == [0.0, 4.0] and s["point_mass"] == 0
    fig2 = run_lsd_figure("tnorm:0:1:0:10", 500, 800, 42)
    assert fig2.ks < 0.08
    assert fig2.summary()["point_mass"] == pytest.approx(1 - 500 / 800)


def test_lsd_figure_constant_basis_rejected():
    from coda_rmt.montecarlo import lsd_figure

    s = spectrum(compose(np.ones((10, 10))), UNBIASED)
    with pytest.raises(ValueError):
        lsd_figure(s, MpLaw(1, 1))
