import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from levychaos.stats import (bootstrap_moment, empirical_cf, ks_band, ks_distance, log_linear_fit,
                             mean_se, non_increasing_within, pnorm)

samples = arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e3, 1e3))


@given(samples, samples)
def test_ks_matches_scipy(a, b):
    assert ks_distance(a, b) == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)


@given(samples)
def test_ks_self_zero(a):
    assert ks_distance(a, a) == 0.0


def test_ks_band_formula():
    assert ks_band(100, 400) == pytest.approx(1.63 * np.sqrt(500 / 40000))


@given(samples, st.floats(1.0, 3.0))
def test_pnorm_bounds(a, p):
    v = pnorm(a, p)
    assert v <= np.max(np.abs(a)) * (1 + 1e-12) + 1e-300
    assert v >= np.mean(np.abs(a)) * (1 - 1e-12) - 1e-300


def test_mean_se():
    m, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


@given(st.floats(-2, 2), st.floats(-3, 3))
def test_log_linear_fit_exact(slope, icpt):
    k = np.arange(1, 8)
    s, c, r2 = log_linear_fit(k, np.exp(icpt + slope * k))
    assert s == pytest.approx(slope, abs=1e-9) and c == pytest.approx(icpt, abs=1e-9) and r2 > 1 - 1e-9


def test_non_increasing_within():
    assert non_increasing_within([0.1, 0.08, 0.085, 0.05], 0.01)
    assert not non_increasing_within([0.1, 0.08, 0.095], 0.01)


@given(st.floats(-5, 5))
def test_empirical_cf_of_constant(c):
    theta = np.linspace(-2, 2, 5)
    assert np.allclose(empirical_cf(np.full(10, c), theta), np.exp(1j * theta * c))


def test_bootstrap_interval_contains_estimate():
    x = np.random.default_rng(0).standard_normal(500)
    out = bootstrap_moment(x, 1.5, B=200, seed=1)
    est, lo, hi = out[0], out[1][0], out[1][1]
    assert lo <= est <= hi
