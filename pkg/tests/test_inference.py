import math
from types import SimpleNamespace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtci.errors import DimensionError, TestUndefinedError
from rtci.estimators import ModelSpec, fit
from rtci.inference import chi_square_sf, hausman_test, regularized_gamma_q
from rtci.synth import gen_erdos_renyi, simulate_panel

mpmath.mp.dps = 50


def mp_sf(x, df):
    return float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True))


def fake_fit(beta, cov):
    return SimpleNamespace(beta=np.atleast_1d(np.asarray(beta, float)),
                           covariance=np.atleast_2d(np.asarray(cov, float)))


def test_sf_examples():
    for df in (1, 2, 5, 30):
        assert chi_square_sf(0.0, df) == 1.0
    assert chi_square_sf(2 * math.log(2), 2) == pytest.approx(0.5, abs=1e-15)
    assert chi_square_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-4)


@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 2.5, 7.0, 20.0, 80.0, 300.0])
@pytest.mark.parametrize("df", [1, 2, 3, 4, 7, 10, 25, 100])
def test_sf_matches_mpmath(x, df):
    assert chi_square_sf(x, df) == pytest.approx(mp_sf(x, df), abs=1e-10)


def test_sf_df2_closed_form():
    for x in np.linspace(0, 60, 241):
        assert abs(chi_square_sf(x, 2) - math.exp(-x / 2)) < 1e-12


@given(st.floats(0, 200), st.floats(1e-6, 20), st.integers(1, 40))
def test_sf_decreasing(x, dx, df):
    assert chi_square_sf(x + dx, df) <= chi_square_sf(x, df)


def test_sf_invalid():
    with pytest.raises(ValueError):
        chi_square_sf(1.0, 0)
    with pytest.raises(ValueError):
        chi_square_sf(1.0, 1.5)
    with pytest.raises(ValueError):
        chi_square_sf(-1.0, 2)
    with pytest.raises(ValueError):
        regularized_gamma_q(0.0, 1.0)


def test_hausman_scalar_example():
    res = hausman_test(fake_fit(1.2, 0.01), fake_fit(1.0, 0.05))
    assert res.statistic == pytest.approx(1.0, rel=1e-12)
    assert res.df == 1
    assert res.p_value == pytest.approx(mp_sf(1.0, 1), abs=1e-10)
    assert res.p_value == pytest.approx(0.3173, abs=1e-4)
    assert not res.psd_violation
    np.testing.assert_allclose(res.beta_diff, [0.2])


def test_hausman_identical_fits():
    f = fake_fit([0.5, 0.1], [[0.02, 0.001], [0.001, 0.03]])
    res = hausman_test(f, f)
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert res.df >= 1


def test_hausman_rank_deficient_difference():
    loc = fake_fit([1.0, 2.0], np.diag([0.01, 0.03]))
    ind = fake_fit([1.3, 2.5], np.diag([0.04, 0.03]))
    res = hausman_test(loc, ind)
    assert res.df == 1
    assert res.statistic == pytest.approx(0.09 / 0.03, rel=1e-10)


def test_hausman_errors():
    with pytest.raises(DimensionError):
        hausman_test(fake_fit([1.0], [[1.0]]), fake_fit([1.0, 2.0], np.eye(2)))
    with pytest.raises(TestUndefinedError):
        hausman_test(fake_fit([1.0], [[0.1]]), fake_fit([1.1], [[0.1]]))


def test_hausman_swapped_labels_flag_violation():
    # indefinite difference: both orientations report the violation
    loc = fake_fit([1.0, 2.0], np.diag([0.01, 0.05]))
    ind = fake_fit([1.2, 2.1], np.diag([0.04, 0.02]))
    a = hausman_test(loc, ind)
    b = hausman_test(ind, loc)
    assert a.psd_violation and b.psd_violation
    np.testing.assert_allclose(a.beta_diff, -b.beta_diff)
    # positive-definite difference, swapped: nothing positive left to test
    loc = fake_fit([1.0], [[0.01]])
    ind = fake_fit([1.2], [[0.05]])
    with pytest.raises(TestUndefinedError) as info:
        hausman_test(ind, loc)
    assert info.value.psd_violation


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4))
def test_hausman_rotation_invariance(seed, p):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(p, p))
    v_loc = m @ m.T + 0.1 * np.eye(p)
    extra = rng.normal(size=(p, p))
    v_ind = v_loc + extra @ extra.T + 0.05 * np.eye(p)
    b_loc, b_ind = rng.normal(size=p), rng.normal(size=p)
    q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    a = hausman_test(fake_fit(b_loc, v_loc), fake_fit(b_ind, v_ind))
    b = hausman_test(fake_fit(q @ b_loc, q @ v_loc @ q.T), fake_fit(q @ b_ind, q @ v_ind @ q.T))
    assert a.df == b.df == p
    assert b.statistic == pytest.approx(a.statistic, rel=1e-8)


def test_hausman_on_real_fits_homogeneous():
    rng = np.random.default_rng(8)
    g = gen_erdos_renyi(30, 0.2, rng)
    p = simulate_panel(g, np.full(30, 0.5), "individual", 100, 1.0, rng)
    loc = fit(g, p, ModelSpec("local_individual", gamma=1.0, focal=3))
    ind = fit(g, p, ModelSpec("individual", focal=3))
    res = hausman_test(loc, ind)
    assert res.df == 1
    assert 0.0 <= res.p_value <= 1.0
    assert res.to_dict().keys() == {"H", "df", "p_value", "psd_violation", "beta_diff"}
