import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from levychaos import CapacityError, ParameterError
from levychaos.levy_noise import (DomainBox, PointCloud, box_integral, characteristic_functional, compensator,
                                  levy_exponent, mass_samples, pair_with_test_function, refine_cloud, sample_cloud)
from levychaos.stats import empirical_cf, mean_se

gammas = st.floats(1.1, 1.9)
cps = st.floats(0.0, 1.0)


@given(gammas, cps, st.floats(0.01, 2.0))
def test_compensator_matches_levy_measure(g, cp, a):
    # int_a^inf z * gamma z^{-1-gamma} dz on a log scale z = e^u
    val = integrate.quad(lambda u: g * np.exp((1 - g) * u), np.log(a), np.log(a) + 80 / (g - 1))[0]
    assert compensator(g, cp, 1 - cp, a) == pytest.approx((2 * cp - 1) * val, rel=1e-7, abs=1e-12)


def test_levy_exponent_untruncated_closed_form():
    # direct quadrature of (e^{iuz} - 1 - iuz) gamma z^{-1-gamma} on z > 0
    g, u = 1.5, 0.7
    f = lambda z, part: part(np.exp(1j * u * z) - 1 - 1j * u * z) * g * z ** (-1 - g)  # noqa: E731
    re = integrate.quad(f, 0, 1, args=(np.real,))[0]
    im = integrate.quad(f, 0, 1, args=(np.imag,))[0]
    # tail on [1, inf): Fourier-weighted quadrature plus the closed-form power parts
    pw = lambda z: g * z ** (-1 - g)  # noqa: E731
    re += integrate.quad(pw, 1, np.inf, weight="cos", wvar=u)[0] - 1.0
    im += integrate.quad(pw, 1, np.inf, weight="sin", wvar=u)[0] - u * g / (g - 1)
    val = levy_exponent(u, g, 1.0, 0.0)[0]
    assert val.real == pytest.approx(re, rel=1e-8) and val.imag == pytest.approx(im, rel=1e-8)


@given(gammas, st.floats(0.05, 1.0), st.floats(-3, 3))
def test_truncated_exponent_small_jump_correction(g, cp, u):
    # removing |z| <= a changes the exponent by u^2 gamma a^{2-gamma} / (2 (2 - gamma)) + O(a^{3-gamma})
    a = 1e-6
    lim = levy_exponent(u, g, cp, 1 - cp)[0]
    near = levy_exponent(u, g, cp, 1 - cp, a=a)[0]
    lead = u * u * g * a ** (2 - g) / (2 * (2 - g))
    assert abs(near - lim - lead) <= 1e-3 * lead + 1e-10


def test_cloud_marks_positions_and_count():
    dom = DomainBox((0.0, -1.0), (2.0, 1.0))
    g, a = 1.5, 0.05
    counts = []
    for r in range(200):
        c = sample_cloud(dom, g, 0.3, 0.7, a, seed=1, key=(r,))
        assert np.all(np.abs(c.marks) > a)
        assert np.all((c.positions >= dom.lower) & (c.positions <= dom.upper))
        counts.append(c.count)
    mean = dom.volume * a ** -g
    m, se = mean_se(counts)
    assert abs(m - mean) < 5 * se


def test_cloud_is_deterministic():
    dom = DomainBox.unit(1)
    a = sample_cloud(dom, 1.4, 1.0, 0.0, 0.1, seed=5, key=(3,))
    b = sample_cloud(dom, 1.4, 1.0, 0.0, 0.1, seed=5, key=(3,))
    assert np.array_equal(a.marks, b.marks) and np.array_equal(a.positions, b.positions)


@given(st.integers(0, 2 ** 32), st.floats(0.05, 1.0), st.floats(0.1, 0.9))
def test_refinement_keeps_atoms(seed, a, frac):
    c = sample_cloud(DomainBox.unit(1), 1.5, 0.5, 0.5, a, seed=seed)
    f = refine_cloud(c, a * frac, seed=seed)
    assert f.count >= c.count
    assert np.array_equal(f.marks[:c.count], c.marks)
    new = np.abs(f.marks[c.count:])
    assert np.all((new > a * frac) & (new <= a))


def test_refinement_increment_has_mean_zero():
    dom, one = DomainBox.unit(1), (lambda x: np.ones(len(x)))
    inc = []
    for r in range(400):
        c = sample_cloud(dom, 1.5, 1.0, 0.0, 0.2, seed=2, key=(r,))
        f = refine_cloud(c, 0.05, seed=2, key=(r,))
        inc.append(pair_with_test_function(f, one, 1.0) - pair_with_test_function(c, one, 1.0))
    m, se = mean_se(inc)
    assert abs(m) < 5 * se


@given(st.integers(1, 3), st.integers(0, 1000))
def test_cloud_bytes_roundtrip(D, seed):
    dom = DomainBox(tuple(-np.arange(D) - 0.5), tuple(np.arange(D) + 1.0))
    c = sample_cloud(dom, 1.3, 0.6, 0.4, 0.5, seed=seed)
    r = PointCloud.from_bytes(c.to_bytes())
    assert r.domain == c.domain and r.gamma == c.gamma and r.a == c.a
    assert np.array_equal(r.marks, c.marks) and np.array_equal(r.positions, c.positions)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        sample_cloud(DomainBox.unit(1), 1.9, 1.0, 0.0, 1e-6, seed=0)


@pytest.mark.parametrize("args", [(1.0, 1.0, 0.0, 0.1), (1.5, 0.7, 0.7, 0.1), (1.5, 1.0, 0.0, 0.0)])
def test_invalid_noise(args):
    with pytest.raises(ParameterError):
        sample_cloud(DomainBox.unit(1), *args, seed=0)


def test_box_integral():
    dom = DomainBox((0.0, 0.0), (1.0, 2.0))
    assert box_integral(lambda x: x[:, 0] * x[:, 1], dom) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("cp", [1.0, 0.5, 0.3])
def test_mass_samples_match_truncated_functional(cp):
    theta = np.linspace(-2, 2, 9)
    g, a = 1.5, 0.01
    m = mass_samples(1.0, g, (cp,), a, 20000, seed=4)[0]
    tr = characteristic_functional(1.0, theta, DomainBox.unit(1), g, cp, 1 - cp, a)
    # |e^{i theta X}| <= 1 so each empirical value has standard error <= 1/sqrt(n)
    assert np.max(np.abs(empirical_cf(m, theta) - tr)) < 5 / np.sqrt(20000)


def test_mass_samples_agree_with_clouds_in_law():
    g, a, n = 1.5, 0.05, 3000
    m = mass_samples(1.0, g, (0.5,), a, n, seed=8)[0]
    one = lambda x: np.ones(len(x))  # noqa: E731
    c = [pair_with_test_function(sample_cloud(DomainBox.unit(1), g, 0.5, 0.5, a, seed=9, key=(r,)), one, 1.0)
         for r in range(n)]
    theta = np.linspace(-1, 1, 5)
    assert np.max(np.abs(empirical_cf(m, theta) - empirical_cf(c, theta))) < 7 / np.sqrt(n)


def test_characteristic_functional_of_indicator_scales_with_volume():
    # for f = 1 on a box the exponent is volume * psi(theta)
    dom = DomainBox((0.0,), (3.0,))
    th = np.array([0.4, -1.1])
    phi = characteristic_functional(1.0, th, dom, 1.4, 0.8, 0.2, 0.0)
    assert np.allclose(phi, np.exp(3.0 * levy_exponent(th, 1.4, 0.8, 0.2)), rtol=1e-8)


def test_exponent_real_part_non_positive():
    assert np.all(levy_exponent(np.linspace(-3, 3, 7), 1.5, 0.5, 0.5).real <= 0)
