import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import special

from levychaos import GateError, ParameterError, TailLaw
from levychaos.levy_noise import DomainBox, sample_cloud
from levychaos.pinning import (PinningParams, check_gate, continuum_pinning, continuum_pinning_chaos,
                               continuum_pinning_resummed, discrete_pinning_correlation, disordered_pinning_Z,
                               doney_constant, homogeneous_Z, make_kernel, mittag_leffler, ml_derivative,
                               pinning_correlation, renewal_solve, sample_pinning_gibbs, select_truncation)
from levychaos.errors import NumericalError
from levychaos.rng import stream


def brute_force_Z(kernel, N, h, beta=0.0, omega=None):
    """Sum over all contact sets in [1, N] of prod K(gaps) exp(h) (1 + beta omega) Kbar(N - last)."""
    om = np.zeros(N) if omega is None else omega
    total = 0.0
    for k in range(N + 1):
        for s in itertools.combinations(range(1, N + 1), k):
            w, last = 1.0, 0
            for n in s:
                w *= kernel.K[n - last] * math.exp(h) * (1 + beta * om[n - 1])
                last = n
            total += w * kernel.Kbar[N - last]
    return total


@pytest.fixture(scope="module")
def kernel():
    return make_kernel(0.7, 4096)


def test_kernel_normalization(kernel):
    n = np.arange(1, 200)
    assert np.allclose(np.cumsum(kernel.K[1:200]) + kernel.Kbar[n], 1.0, atol=1e-14)
    assert kernel.K[1000] * 1000 ** 1.7 == pytest.approx(kernel.c0)


def test_renewal_mass_residual(kernel):
    assert kernel.renewal_residual() < 1e-12


def test_renewal_mass_asymptotic(kernel):
    N = kernel.N_max
    assert kernel.u[N] * N ** 0.3 * kernel.c0 / doney_constant(0.7) == pytest.approx(1.0, rel=0.1)


@given(st.integers(1, 30), st.integers(0, 2 ** 32))
def test_renewal_solve_recursion(L, seed):
    gen = np.random.default_rng(seed)
    K = gen.random(L + 1)
    w = gen.random((2, L + 1))
    y = renewal_solve(K, w)
    for n in range(1, L + 1):
        assert y[:, n] == pytest.approx(w[:, n] * (y[:, :n] @ K[n:0:-1]), rel=1e-12)


@pytest.mark.parametrize("N", [1, 5, 9])
@pytest.mark.parametrize("h", [0.0, -0.4, 0.7])
def test_homogeneous_Z_matches_enumeration(kernel, N, h):
    Z, Zc = homogeneous_Z(kernel, h, N)
    assert Z == pytest.approx(brute_force_Z(kernel, N, h), rel=1e-12)
    if h == 0.0:
        assert Z == pytest.approx(1.0, rel=1e-12)
        assert np.allclose(Zc, kernel.u[:N + 1], rtol=1e-12)


@given(st.integers(1, 9), st.floats(-1, 1), st.floats(0, 1), st.integers(0, 2 ** 32))
def test_disordered_Z_matches_enumeration(N, h, beta, seed):
    kern = make_kernel(0.6, 16)
    om = TailLaw(1.5).sample(N, stream(seed))
    got = disordered_pinning_Z(kern, PinningParams(N, h, beta), om)
    want = brute_force_Z(kern, N, h, beta, om) / brute_force_Z(kern, N, h)
    assert got == pytest.approx(want, rel=1e-11)


def test_disordered_Z_without_coupling_is_one(kernel):
    om = TailLaw(1.5).sample((3, 50), stream(0))
    assert np.allclose(disordered_pinning_Z(kernel, PinningParams(50, 0.1, 0.0), om), 1.0, rtol=1e-12)


def test_disordered_Z_has_unit_mean(kernel):
    law, N = TailLaw(1.5), 64
    p = PinningParams.from_targets(kernel, law, N, 0.5, 0.5)
    Z = disordered_pinning_Z(kernel, p, law.sample((20000, N), stream(4)))
    assert abs(Z.mean() - 1.0) < 5 * Z.std() / np.sqrt(Z.size)


def test_gibbs_sampler_one_point_function():
    kern, N, h = make_kernel(0.6, 8), 6, 0.3
    om = TailLaw(1.5).sample(N, stream(2))
    p = PinningParams(N, h, 0.5)
    n = 4000
    sets = sample_pinning_gibbs(kern, p, om, seed=3, n_samples=n)
    freq = np.array([sum(x in s for s in sets) for x in range(1, N + 1)]) / n
    Z = brute_force_Z(kern, N, h, 0.5, om)
    exact = []
    for x in range(1, N + 1):
        # contact at x splits the path into a constrained and a free piece
        sub = 0.0
        for k in range(N + 1):
            for s in itertools.combinations(range(1, N + 1), k):
                if x not in s:
                    continue
                w, last = 1.0, 0
                for m in s:
                    w *= kern.K[m - last] * math.exp(h) * (1 + 0.5 * om[m - 1])
                    last = m
                sub += w * kern.Kbar[N - last]
        exact.append(sub / Z)
    exact = np.array(exact)
    assert np.all(np.abs(freq - exact) < 5 * np.sqrt(exact * (1 - exact) / n) + 1e-3)


@given(st.floats(-5, 5))
def test_mittag_leffler_special_cases(z):
    assert mittag_leffler(1.0, z) == pytest.approx(math.exp(z), rel=1e-12)
    # E_alpha(z) = sum (Gamma(alpha) z)^k / Gamma(alpha k + 1), so E_{1/2}(z) = erfcx(-sqrt(pi) z)
    assert mittag_leffler(0.5, z) == pytest.approx(special.erfcx(-math.sqrt(math.pi) * z), rel=1e-10)


@given(st.floats(0.2, 1.0), st.floats(-4, 4))
def test_mittag_leffler_derivative(alpha, z):
    # E_alpha(z) grows like exp((Gamma(alpha) z)^{1/alpha}); stay well inside float range
    assume(z <= 0 or (special.gamma(alpha) * z) ** (1 / alpha) < 300)
    def cd(eps):
        return (mittag_leffler(alpha, z + eps) - mittag_leffler(alpha, z - eps)) / (2 * eps)
    fd = (4 * cd(5e-5) - cd(1e-4)) / 3  # Richardson extrapolation
    assert ml_derivative(alpha, z) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_mittag_leffler_overflow_is_reported():
    with pytest.raises(NumericalError):
        mittag_leffler(0.25, 2.0)


def test_continuum_pinning_at_zero_field():
    Z, Zc = continuum_pinning(0.7, 0.0, np.array([0.25, 1.0]))
    assert np.allclose(Z, 1.0)
    assert np.allclose(Zc, np.array([0.25, 1.0]) ** -0.3, rtol=1e-12)


def test_discrete_correlations_approach_continuum(kernel):
    err = []
    for N in (256, 1024, 4096):
        hN = 0.5 / (N * kernel.u[N])
        d = discrete_pinning_correlation(kernel, hN, N, [int(0.3 * N), int(0.6 * N)])
        err.append(abs(d - pinning_correlation(0.7, 0.5, [0.3, 0.6])))
    assert err[0] > err[1] > err[2]


@pytest.mark.parametrize("a", [0.5, 0.3, 0.2])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_chaos_matches_resummation(a, seed):
    c = sample_cloud(DomainBox.unit(1), 1.5, 1.0, 0.0, a, seed=seed)
    x = continuum_pinning_chaos(0.7, 0.5, 0.5, c, 80).total
    y = continuum_pinning_resummed(0.7, 0.5, 0.5, c)
    z = continuum_pinning_resummed(0.7, 0.5, 0.5, c, extended=True)
    assert x == pytest.approx(y, rel=1e-8)
    assert y == pytest.approx(z, rel=1e-10)


def test_empty_cloud_gives_compensated_homogeneous_value():
    c = sample_cloud(DomainBox.unit(1), 1.5, 1.0, 0.0, 50.0, seed=0)
    assert c.count == 0 or pytest.skip("cloud not empty")
    # only the compensator acts: the field shifts by -beta_hat kappa
    want = mittag_leffler(0.7, 0.5 - 0.5 * c.kappa) / mittag_leffler(0.7, 0.5)
    assert continuum_pinning_resummed(0.7, 0.5, 0.5, c) == pytest.approx(want, rel=1e-10)


def test_select_truncation():
    per = np.tile(0.1 ** np.arange(12), (3, 1))
    assert select_truncation(per, tol=1e-3) == 3
    with pytest.raises(NumericalError):
        select_truncation(np.ones((2, 5)), tol=1e-3)


def test_gate():
    check_gate(0.7, 1.5)
    with pytest.raises(GateError):
        check_gate(0.2, 1.5)
    check_gate(0.2, 1.5, force=True)


def test_invalid_kernel():
    with pytest.raises(ParameterError):
        make_kernel(1.2, 10)
    with pytest.raises(ParameterError):
        PinningParams(10, 0.0, 1.5)


# (0.3, -8) is left out: its series peaks near k = 1e5 with terms of size e^500
@pytest.mark.parametrize("alpha,z", [(0.3, -0.5), (0.3, -2.0), (0.7, -0.5), (0.7, -2.0), (0.7, -8.0),
                                     (0.9, -0.5), (0.9, -2.0), (0.9, -8.0)])
@pytest.mark.parametrize("deriv", [False, True])
def test_negative_integral_matches_series(alpha, z, deriv):
    import mpmath
    from levychaos.pinning import _ml_negative_integral
    with mpmath.workdps(260):
        a, g, zz = mpmath.mpf(alpha), mpmath.gamma(alpha), mpmath.mpf(z)
        if deriv:
            term = lambda k: k * g ** k * zz ** (k - 1) / mpmath.gamma(a * k + 1)  # noqa: E731
        else:
            term = lambda k: (g * zz) ** k / mpmath.gamma(a * k + 1)  # noqa: E731
        series = float(mpmath.fsum(term(k) for k in range(0, 4000)))
    assert _ml_negative_integral(alpha, z, deriv) == pytest.approx(series, rel=1e-9)


@given(st.floats(0.15, 0.99), st.floats(-60, -0.01))
def test_mittag_leffler_completely_monotone_on_negative_axis(alpha, z):
    # E_alpha(-x) is positive and decreasing in x for alpha in (0, 1]
    v, d = mittag_leffler(alpha, z), ml_derivative(alpha, z)
    assert 0 < v < 1 and d > 0
    assert mittag_leffler(alpha, 1.1 * z) < v
