import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from levychaos import ParameterError, TailLaw
from levychaos.chaos import (Lattice, ProductKernel, discrete_chaos, mesh_projection, moment_bound_constant,
                             simplex_integral, symmetric_norm)
from levychaos.experiments import continuum_exact_vs_mesh, pinning_chaos_identity, polymer_chaos_identity, simplex_mc
from levychaos.levy_noise import DomainBox, sample_cloud


def exp_kernel(rate):
    # psi(t_1..t_k) = prod exp(-rate (t_j - t_{j-1})) (1 + t_k)
    return ProductKernel(lambda p, c: np.exp(-rate * (c[..., 0] - p[..., 0])), lambda p: 1.0 + p[..., 0])


def brute_chaos(kernel, times, omega, beta_hat, V, M):
    out = np.zeros(M + 1)
    n = len(times)
    for k in range(M + 1):
        for s in itertools.combinations(range(n), k):
            pts = np.asarray(times)[list(s)].reshape(-1, 1)
            out[k] += beta_hat ** k * kernel(pts) * np.prod(np.asarray(omega)[list(s)] / V)
    return out


@given(st.integers(1, 7), st.floats(0.0, 3.0), st.floats(0.1, 2.0), st.integers(0, 2 ** 32))
def test_discrete_chaos_matches_subset_sum(n, rate, beta_hat, seed):
    gen = np.random.default_rng(seed)
    times = np.sort(gen.random(n)) + 1e-3
    om = gen.standard_normal(n)
    V = 1.7
    lat = Lattice(times.reshape(-1, 1), 1.0 / n, V_delta=V)
    kern = exp_kernel(rate)
    want = brute_chaos(kern, times, om, beta_hat, V, n)
    for method in ("markov", "enumerate"):
        got = discrete_chaos(kern, lat, om, beta_hat, max_order=n, method=method)
        assert np.allclose(got.per_order, want, rtol=1e-10, atol=1e-12)


def test_discrete_chaos_replica_batch():
    gen = np.random.default_rng(1)
    times = np.sort(gen.random(6))
    lat = Lattice(times.reshape(-1, 1), 1 / 6)
    om = gen.standard_normal((4, 6))
    batch = discrete_chaos(exp_kernel(1.0), lat, om, 0.7, max_order=6).total
    single = [discrete_chaos(exp_kernel(1.0), lat, o, 0.7, max_order=6).total for o in om]
    assert np.allclose(batch, single, rtol=1e-12)


@given(st.integers(1, 6), st.floats(1.01, 2.0), st.integers(0, 2 ** 32))
def test_symmetric_norm_matches_enumeration(n, q, seed):
    gen = np.random.default_rng(seed)
    times = np.sort(gen.random(n)) + 1e-3
    v = 0.3
    lat = Lattice(times.reshape(-1, 1), v)
    kern = exp_kernel(0.5)
    for k in range(n + 1):
        s = sum(abs(kern(times[list(c)].reshape(-1, 1))) ** q for c in itertools.combinations(range(n), k))
        assert symmetric_norm(kern, lat, q, order=k).value == pytest.approx((v ** k * s) ** (1 / q), rel=1e-10)


@given(st.floats(0.2, 3.0), st.floats(0.1, 4.0))
def test_simplex_integral_low_orders(xi, t):
    assert simplex_integral(xi, 0, t) == pytest.approx(t ** (xi - 1), rel=1e-12)
    # k = 1 is a Beta integral
    assert simplex_integral(xi, 1, t) == pytest.approx(t ** (2 * xi - 1) * special.beta(xi, xi), rel=1e-12)


@pytest.mark.parametrize("xi,k", [(0.7, 3), (1.5, 4), (0.3, 2)])
def test_simplex_integral_monte_carlo(xi, k):
    est, se = simplex_mc(xi, k, 20000, seed=1)
    assert abs(est - simplex_integral(xi, k)) <= 4 * se + 1e-12 * simplex_integral(xi, k)


def test_moment_bound_constant():
    c = moment_bound_constant(1.2, 1.8, 1.5, 2.0)
    assert c == pytest.approx(1 / 0.2 * max(0.3 ** (-1 / 1.2), 0.3 ** (-1 / 1.8)) * 2 ** (1 / 1.2 - 1 / 1.8))
    with pytest.raises(ParameterError):
        moment_bound_constant(1.6, 1.8, 1.5, 1.0)


def test_mesh_projection_conserves_mass():
    c = sample_cloud(DomainBox((0.0, 0.0), (1.0, 2.0)), 1.5, 0.5, 0.5, 0.1, seed=2)
    lat, m = mesh_projection(c, 16)
    assert m.sum() == pytest.approx(c.marks.sum() - c.kappa * 2.0, abs=1e-10)
    assert lat.n_sites == 256


def test_pinning_chaos_identity():
    out = pinning_chaos_identity(n_configs=5, N=10, seed=3)
    assert out["max_rel"] <= 1e-9


def test_polymer_chaos_identity():
    out = polymer_chaos_identity(n_configs=3, N=6, L=4, enum_L=2, seed=1)
    assert out["max_rel_chaos"] <= 1e-9 and out["max_rel_enumeration"] <= 1e-10


def test_continuum_mesh_converges_to_exact():
    errs = [continuum_exact_vs_mesh(mesh=m)["max_abs"] for m in (128, 512)]
    assert errs[1] < errs[0]


def test_lattice_volume():
    lat = Lattice.regular((0.0,), (2.0,), (8,))
    assert lat.volume == pytest.approx(2.0)
    assert math.isclose(lat.cell_volume, 0.25)


def test_heavy_tail_law_chaos_mean_is_constant_term():
    # E omega = 0 so every chaos order k >= 1 has mean zero
    law = TailLaw(1.5)
    gen = np.random.default_rng(0)
    times = np.sort(gen.random(5))
    lat = Lattice(times.reshape(-1, 1), 0.2)
    om = law.sample((40000, 5), gen)
    res = discrete_chaos(exp_kernel(1.0), lat, om, 0.5, max_order=2)
    x1 = res.per_order[:, 1]
    assert abs(x1.mean()) < 5 * x1.std() / np.sqrt(len(x1))
