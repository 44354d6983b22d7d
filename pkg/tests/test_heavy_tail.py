import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from levychaos import ParameterError, TailLaw, sample_disorder, solve_noise_scale
from levychaos.heavy_tail import NoiseScales, truncated_moment_asymptotic, truncated_moment_ratio
from levychaos.rng import stream

gammas = st.floats(1.05, 1.95)
laws = st.one_of(
    gammas.map(TailLaw),
    st.tuples(gammas, st.floats(0.0, 1.0)).map(
        lambda t: TailLaw(t[0], t[1], 1.0 - t[1], support_mode="two_sided")),
)


@pytest.mark.parametrize("law", [TailLaw(1.5), TailLaw(1.3, 0.4, 0.6, "two_sided")])
def test_law_is_centred_and_normalized(law):
    # the density integrates to one and has mean zero
    lo = -1.0 if law.one_sided else -np.inf
    bps = [-law.mean_shift + law.scale] if law.one_sided else [-law.mean_shift - 1, -law.mean_shift + 1]
    mass = sum(integrate.quad(law.pdf, a, b, limit=200)[0] for a, b in zip([lo] + bps, bps + [np.inf]))
    mean = sum(integrate.quad(lambda t: t * law.pdf(t), a, b, limit=200)[0]
               for a, b in zip([lo] + bps, bps + [np.inf]))
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(0.0, abs=1e-6)


@given(laws)
def test_tail_constant(law):
    t = 1e8
    assert law.sf(t) * t ** law.gamma == pytest.approx(law.tail_constant, rel=1e-6)
    assert law.abs_sf(t) * t ** law.gamma == pytest.approx(law.abs_tail_constant, rel=1e-6)


@given(laws, st.floats(1e-9, 0.2))
def test_noise_scale_inverts_abs_tail(law, v):
    V = solve_noise_scale(law, v)
    assert law.abs_sf(V) == pytest.approx(v, rel=1e-10)


def test_samples_follow_cdf():
    for law in (TailLaw(1.5), TailLaw(1.2, 0.3, 0.7, "two_sided")):
        x = law.sample(20000, stream(7, 1))
        assert stats.kstest(x, law.cdf).pvalue > 1e-3


@given(laws, st.integers(1, 200), st.integers(0, 200))
def test_shorter_draw_is_prefix(law, n, extra):
    a = sample_disorder(law, n, seed=3, key=(1,))
    b = sample_disorder(law, n + extra, seed=3, key=(1,))
    assert np.array_equal(a, b[:n])


def test_one_sided_support():
    x = TailLaw(1.7).sample(10000, stream(1))
    assert np.all(x > -1.0)


@pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(gamma=2.0), dict(gamma=1.5, c_plus=0.5, c_minus=0.5),
                                dict(gamma=1.5, support_mode="bogus")])
def test_invalid_law(kw):
    with pytest.raises(ParameterError):
        TailLaw(**kw)


def test_noise_scales_roundtrip():
    law = TailLaw(1.5)
    s = NoiseScales.from_beta(law, 1e-3, 0.5, 0.2)
    assert s.beta == pytest.approx(0.2)
    assert s.V_delta == pytest.approx(solve_noise_scale(law, 1e-3))


def _exact_truncated_moment(law, p, a, v):
    g = lambda u: np.exp((p + 1) * u) * law.abs_pdf(np.exp(u))  # noqa: E731  (t = e^u)
    cut = np.log(a * solve_noise_scale(law, v))
    if p < law.gamma:
        return integrate.quad(g, cut, cut + 80.0 / (law.gamma - p), limit=500)[0]
    return integrate.quad(g, -60.0, 0.0, limit=500)[0] + integrate.quad(g, 0.0, cut, limit=500)[0]


def test_big_jump_moment_asymptotic():
    law = TailLaw(1.5)
    r = _exact_truncated_moment(law, 1.2, 1.0, 1e-10) / truncated_moment_asymptotic(law, 1.2, 1.0, 1e-10)
    assert r == pytest.approx(1.0, rel=1e-3)


def test_small_jump_moment_asymptotic_rate():
    # the bulk correction decays like (aV)^{gamma - p}, i.e. v^{(p - gamma)/gamma}
    law, p = TailLaw(1.5), 1.8
    err = [abs(_exact_truncated_moment(law, p, 1.0, v) / truncated_moment_asymptotic(law, p, 1.0, v) - 1)
           for v in (1e-8, 1e-12)]
    assert err[1] < err[0]
    assert err[0] / err[1] == pytest.approx(1e4 ** ((p - law.gamma) / law.gamma), rel=0.1)


def test_truncated_moment_ratio_big_jumps():
    r = truncated_moment_ratio(TailLaw(1.5), 1.2, 1.0, 1e-3, n_samples=10 ** 6, seed=2)
    assert abs(r - 1.0) < 0.1
