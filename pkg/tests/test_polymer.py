import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from levychaos import GateError, ParameterError, TailLaw, solve_noise_scale
from levychaos.polymer import (KilledSemigroup, PolymerParams, StableWalk, check_polymer_gate, disorder_rows,
                               disordered_polymer_Z, enumerate_polymer_Z, llt_error, polymer_disorder_field,
                               read_disorder_grid, sample_walk, stable_density, step_pmf, walk_maxima, walk_pmf,
                               write_disorder_grid)
from levychaos.rng import stream


def test_stable_density_closed_forms():
    x = np.array([0.0, 0.3, 1.7, 6.0, 40.0])
    assert np.allclose(stable_density(1.0, x), 1 / (np.pi * (1 + x ** 2)), rtol=1e-9)
    assert np.allclose(stable_density(2.0, x), np.exp(-x ** 2 / 4) / np.sqrt(4 * np.pi), rtol=1e-9, atol=1e-300)


@pytest.mark.parametrize("alpha", [0.7, 1.3, 1.8])
def test_stable_density_normalized(alpha):
    g = lambda x: 2 * stable_density(alpha, np.array([x]))[0]  # noqa: E731
    # both tails beyond 1e4 from g(x) ~ Gamma(alpha + 1) sin(pi alpha / 2) / pi x^{-alpha-1}
    tail = 2 / np.pi * math.gamma(alpha) * np.sin(np.pi * alpha / 2) * 1e4 ** -alpha
    total = integrate.quad(g, 0, 50, limit=400)[0] + integrate.quad(g, 50, 1e4, limit=400)[0] + tail
    assert total == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("alpha", [1.2, 1.5])
def test_step_pmf_matches_rounded_stable(alpha):
    p = step_pmf(StableWalk(alpha), 6)
    k = p.support
    want = stats.levy_stable.cdf(k + 0.5, alpha, 0.0) - stats.levy_stable.cdf(k - 0.5, alpha, 0.0)
    assert np.allclose(p.probs, want, atol=2e-6)
    assert np.allclose(p.probs, p.probs[::-1], atol=1e-14)


def test_walk_pmf_is_convolution_power():
    walk = StableWalk(1.5)
    s = step_pmf(walk, 400).probs
    three = np.convolve(np.convolve(s, s), s)
    mid = len(three) // 2
    got = walk_pmf(walk, 3, 10, mass_tol=None).probs
    assert np.allclose(got, three[mid - 10:mid + 11], atol=1e-7)


def test_llt_error_decreases():
    walk = StableWalk(1.5)
    assert llt_error(walk, 1024) < llt_error(walk, 128)


@given(st.integers(1, 4), st.integers(1, 2), st.floats(1.1, 1.9), st.floats(0.0, 1.0), st.integers(0, 2 ** 32))
def test_dp_matches_enumeration(N, L, alpha, beta, seed):
    walk = StableWalk(alpha)
    law = TailLaw(1.3)
    f = law.sample((N, 2 * L + 1), stream(seed))
    dp = float(disordered_polymer_Z(walk, PolymerParams(N, beta, 1.0, law, alpha), f, window=L).Z)
    assert dp == pytest.approx(enumerate_polymer_Z(walk, N, L, beta, f), rel=1e-10)


def test_zero_coupling_gives_window_mass():
    walk, law = StableWalk(1.5), TailLaw(1.4)
    f = law.sample((3, 20, 21), stream(1))
    res = disordered_polymer_Z(walk, PolymerParams(20, 0.0, 1.0, law, 1.5), f, window=10)
    assert np.allclose(res.Z, res.mass, rtol=1e-12)
    assert np.allclose(res.normalized, 1.0)


def test_params_from_targets():
    walk, law = StableWalk(1.5), TailLaw(1.4)
    p = PolymerParams.from_targets(walk, law, 256, 0.5, A=4.0)
    aN = 256 ** (1 / 1.5)
    assert law.abs_sf(p.V_N) == pytest.approx(1 / (256 * aN), rel=1e-10)
    assert p.beta == pytest.approx(0.5 * aN / p.V_N)
    assert p.window == int(np.ceil(8 * aN))


def test_gate():
    check_polymer_gate(1.5, 1.4)
    with pytest.raises(GateError):
        check_polymer_gate(0.5, 1.6)
    with pytest.raises(GateError):
        PolymerParams.from_targets(StableWalk(0.5), TailLaw(1.6), 64, 0.5)


def test_nested_windows_share_disorder():
    law = TailLaw(1.5)
    small = disorder_rows(law, 3, 5, 0, 4)
    big = disorder_rows(law, 3, 5, 0, 9)
    assert np.array_equal(big[:, 5:14], small)


@given(st.integers(0, 2 ** 64 - 1))
def test_disorder_grid_roundtrip(seed):
    import tempfile, os
    f = polymer_disorder_field(TailLaw(1.5), 3, 2, seed=seed % 1000)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.bin")
        write_disorder_grid(path, f, 1.5, seed)
        g, meta = read_disorder_grid(path)
    assert np.array_equal(f, g) and meta == {"N": 3, "L": 2, "gamma": 1.5, "seed": seed}


def test_semigroup_survival_properties():
    sg = KilledSemigroup.build(1.5, 2.0, 0.05)
    s = [sg.survival(t) for t in (0.0, 0.1, 0.5, 2.0)]
    assert s[0] == pytest.approx(1.0, abs=1e-2)
    assert all(a > b for a, b in zip(s, s[1:]))
    wide = KilledSemigroup.build(1.5, 8.0, 0.05)
    assert wide.survival(0.5) > sg.survival(0.5)


def test_semigroup_survival_against_walk():
    # P[sup_{t<=1} |X_t| < R] for the stable process vs a fine random walk with rounding-free increments
    alpha, R = 1.5, 3.0
    sg = KilledSemigroup.build(alpha, R, 0.05)
    n = 400
    y = stats.levy_stable.rvs(alpha, 0.0, size=(4000, n), random_state=np.random.default_rng(0)) * n ** (-1 / alpha)
    mc = np.mean(np.abs(np.cumsum(y, axis=1)).max(axis=1) < R)
    # discrete monitoring overestimates survival slightly
    assert sg.survival(1.0) == pytest.approx(mc, abs=0.03)


def test_walk_sampling_and_maxima():
    walk = StableWalk(1.5)
    s = sample_walk(walk, 50, seed=1)
    assert s.shape == (50,) and s.dtype.kind == "i"
    assert np.array_equal(s, sample_walk(walk, 50, seed=1))
    m = walk_maxima(walk, 50, 100, seed=2)
    assert m.shape == (100,) and np.all(m >= 0)


def test_invalid_walk():
    with pytest.raises(ParameterError):
        StableWalk(2.5)
    with pytest.raises(ParameterError):
        StableWalk(1.5, d=2)


def test_noise_scale_for_polymer_targets_is_exact():
    law = TailLaw(1.4)
    V = solve_noise_scale(law, 1e-5)
    assert law.abs_sf(V) == pytest.approx(1e-5, rel=1e-12)
