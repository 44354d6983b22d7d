"""Disordered pinning model built on a pure power renewal.

The inter-arrival law is K(n) = c0 n^{-(1+alpha)} with c0 = 1/zeta(1+alpha).
Partition functions are computed by exact renewal recursions; the
continuum limits are expressed through the modified Mittag-Leffler function

    E_alpha(z) = sum_k z^k Gamma(alpha)^k / Gamma(alpha k + 1).
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import mpmath
import numba
import numpy as np
from scipy import integrate, special

from . import rng as _rng
from .chaos import ChaosResult, ProductKernel
from .errors import GateError, NumericalError, ParameterError
from .heavy_tail import TailLaw, solve_noise_scale
from .levy_noise import PointCloud

_BLOCK = 128


def renewal_solve(K: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve y[:, 0] = 1, y[:, n] = w[:, n] * sum_{m<n} y[:, m] K[n - m].

    ``w`` has shape (R, L) (column 0 ignored) and ``K`` length >= L. Columns
    are filled block by block: the contribution of all earlier blocks is one
    matrix product, the remainder a short sequential sweep.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    R, L = w.shape
    y = np.zeros((R, L))
    y[:, 0] = 1.0
    for s in range(1, L, _BLOCK):
        e = min(L, s + _BLOCK)
        idx = np.arange(s, e)[None, :] - np.arange(s)[:, None]
        acc = y[:, :s] @ K[idx]
        for n in range(s, e):
            tot = acc[:, n - s]
            if n > s:
                tot = tot + y[:, s:n] @ K[n - s:0:-1]
            y[:, n] = w[:, n] * tot
    return y


@dataclass(frozen=True)
class RenewalKernel:
    """K, its tail Kbar(n) = P[tau_1 > n] and the renewal mass u(n) = P[n in tau]."""

    alpha: float
    N_max: int
    K: np.ndarray
    Kbar: np.ndarray
    u: np.ndarray

    @property
    def c0(self) -> float:
        return 1.0 / special.zeta(1.0 + self.alpha)

    def renewal_residual(self) -> float:
        n = np.arange(1, self.N_max + 1)
        conv = np.array([np.dot(self.K[1:m + 1], self.u[m - 1::-1]) for m in n])
        return float(np.max(np.abs(self.u[1:] - conv)))


def make_kernel(alpha: float, N_max: int) -> RenewalKernel:
    """Pure power renewal kernel with exact zeta normalization."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if int(N_max) < 2:
        raise ParameterError("N_max must be >= 2")
    N_max = int(N_max)
    n = np.arange(N_max + 1, dtype=float)
    c0 = 1.0 / special.zeta(1.0 + alpha)
    K = np.zeros(N_max + 1)
    K[1:] = c0 * n[1:] ** (-(1.0 + alpha))
    # P[tau_1 > n] = c0 * zeta(1 + alpha, n + 1), the Hurwitz tail sum
    Kbar = c0 * special.zeta(1.0 + alpha, n + 1.0)
    Kbar[0] = 1.0
    u = renewal_solve(K, np.ones((1, N_max + 1)))[0]
    for arr in (K, Kbar, u):
        arr.setflags(write=False)
    return RenewalKernel(float(alpha), N_max, K, Kbar, u)


def doney_constant(alpha: float) -> float:
    """alpha sin(pi alpha) / pi."""
    return alpha * math.sin(math.pi * alpha) / math.pi


def check_gate(alpha: float, gamma: float, force: bool = False) -> None:
    """Refuse configurations outside 1 - alpha < 1/gamma unless forced."""
    if not (1.0 - alpha < 1.0 / gamma) and not force:
        raise GateError(
            f"pinning requires 1 - alpha < 1/gamma (heavy-tail Harris criterion with correlation "
            f"exponent 1 - alpha); got 1 - alpha = {1 - alpha:.4g} >= 1/gamma = {1 / gamma:.4g}")


def homogeneous_Z(kernel: RenewalKernel, h: float, N: int):
    """Homogeneous free partition function Z_{N,h} and the table Zc(0..N).

    Returns
    -------
    Z_free : float
    Zc : ndarray, length N + 1
    """
    if N > kernel.N_max:
        raise ParameterError("N exceeds kernel.N_max")
    Zc = renewal_solve(kernel.K, np.full((1, N + 1), math.exp(h)))[0]
    return float(Zc @ kernel.Kbar[N::-1]), Zc


def free_from_constrained(kernel: RenewalKernel, Zc: np.ndarray) -> np.ndarray:
    """Z_free(j) = sum_{m<=j} Zc(m) Kbar(j - m) for every j <= len(Zc) - 1."""
    L = len(Zc)
    return np.convolve(Zc, kernel.Kbar[:L])[:L]


# -- Mittag-Leffler ------------------------------------------------------------

_ML_TERMS = 10_000


@functools.lru_cache(maxsize=32)
def _ml_coef(alpha: float) -> np.ndarray:
    # log(Gamma(alpha)^k / Gamma(alpha k + 1)), k = 0, 1, ...
    k = np.arange(_ML_TERMS, dtype=float)
    return k * special.gammaln(alpha) - special.gammaln(alpha * k + 1)


def _ml_terms(alpha: float, z: float, deriv: bool):
    coef = _ml_coef(alpha)
    lz = math.log(abs(z)) if z != 0 else -np.inf
    n = 64
    while True:
        k = np.arange(n, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if deriv:
                k = k[1:]
                logt = np.log(k) + (k - 1) * lz + coef[1:n]
                if z == 0:
                    logt[1:] = -np.inf
                    logt[0] = coef[1]
            else:
                logt = k * lz + coef[:n]
                logt[0] = 0.0
        peak = int(np.argmax(logt))
        below = np.nonzero(logt[peak:] < -40.0)[0]
        if below.size:
            break
        if n >= _ML_TERMS:
            raise NumericalError(f"Mittag-Leffler series did not converge within {_ML_TERMS} terms (z={z})")
        n = min(4 * n, _ML_TERMS)
    stop = peak + int(below[0]) + 1
    k, logt = k[:stop], logt[:stop]
    parity = (k - 1) if deriv else k
    sign = np.where(parity % 2 == 1, -1.0, 1.0) if z < 0 else np.ones_like(k)
    return k, logt, sign, float(logt[peak])


_ML_SERIES_LMAX = 60.0  # beyond this the alternating series needs too many digits


def _ml_negative_integral(alpha: float, z: float, deriv: bool) -> float:
    """E_alpha(z), z < 0, from the completely monotone representation.

    With x = Gamma(alpha) |z| and w = (r x^{1/alpha})^alpha,
    E = sin(pi alpha) / (pi alpha) int_0^inf exp(-w^{1/alpha}) x / (w^2 + 2 w x cos(pi alpha) + x^2) dw.
    """
    ga = special.gamma(alpha)
    x = -ga * z
    c = math.cos(math.pi * alpha)
    W = 60.0 ** alpha  # exp(-w^{1/alpha}) < 1e-26 beyond W
    if deriv:
        f = lambda w: math.exp(-w ** (1.0 / alpha)) * (w * w - x * x) / (w * w + 2 * w * x * c + x * x) ** 2  # noqa: E731
    else:
        f = lambda w: math.exp(-w ** (1.0 / alpha)) * x / (w * w + 2 * w * x * c + x * x)  # noqa: E731
    pts = [x] if x < W else None
    with warnings.catch_warnings():
        # quad flags roundoff near full precision; the error estimate is checked below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, 0.0, W, points=pts, limit=400, epsabs=0.0, epsrel=1e-13)
    if not np.isfinite(val) or err > 1e-9 * abs(val) + 1e-300:
        raise NumericalError(f"Mittag-Leffler integral failed at z={z}: error estimate {err}")
    pre = math.sin(math.pi * alpha) / (math.pi * alpha)
    # dE/dz = -Gamma(alpha) dE/dx
    return -ga * pre * val if deriv else pre * val


def _ml_scalar(alpha: float, z: float, deriv: bool) -> float:
    if alpha == 1.0:
        return math.exp(z)
    try:
        k, logt, sign, lmax = _ml_terms(alpha, z, deriv)
    except NumericalError:
        if z >= 0:
            raise NumericalError(f"Mittag-Leffler value overflows at z={z}") from None
        return _ml_negative_integral(alpha, z, deriv)
    if z >= 0 or lmax < 0.0:
        return math.fsum(sign * np.exp(logt))
    if lmax > _ML_SERIES_LMAX:
        return _ml_negative_integral(alpha, z, deriv)
    # alternating series with large terms: extended precision
    dps = 20 + int(lmax / math.log(10)) + 1
    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        ga = mpmath.gamma(a)
        zz = mpmath.mpf(z)
        s = mpmath.mpf(0)
        for kk in k.astype(int):
            if deriv:
                s += kk * zz ** (kk - 1) * ga ** kk / mpmath.gamma(a * kk + 1)
            else:
                s += zz ** kk * ga ** kk / mpmath.gamma(a * kk + 1)
        return float(s)


def mittag_leffler(alpha: float, z):
    """Modified Mittag-Leffler function E_alpha(z) (vectorized over z)."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError("alpha must lie in (0, 1]")
    zs = np.asarray(z, dtype=float)
    out = np.array([_ml_scalar(alpha, float(v), False) for v in zs.reshape(-1)]).reshape(zs.shape)
    return out[()] if out.ndim == 0 else out


def ml_derivative(alpha: float, z):
    """dE_alpha/dz by term-wise differentiation."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError("alpha must lie in (0, 1]")
    zs = np.asarray(z, dtype=float)
    out = np.array([_ml_scalar(alpha, float(v), True) for v in zs.reshape(-1)]).reshape(zs.shape)
    return out[()] if out.ndim == 0 else out


def continuum_pinning(alpha: float, h_hat: float, t):
    """(Z_t, Zc_t) = (E_alpha(h t^alpha), alpha t^(alpha-1) E'_alpha(h t^alpha))."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("t must be positive")
    x = h_hat * t ** alpha
    Z = mittag_leffler(alpha, x)
    Zc = alpha * t ** (alpha - 1.0) * ml_derivative(alpha, x)
    return Z, Zc


def pinning_correlation(alpha: float, h_hat: float, times) -> float:
    """Continuum k-point function Z_1^{-1} prod Zc(t_j - t_{j-1}) Z(1 - t_k)."""
    t = np.asarray(times, dtype=float).reshape(-1)
    Z1, _ = continuum_pinning(alpha, h_hat, 1.0)
    if t.size == 0:
        return 1.0
    gaps = np.diff(np.concatenate([[0.0], t]))
    if np.any(gaps <= 0) or t[-1] >= 1.0:
        return 0.0
    _, zc = continuum_pinning(alpha, h_hat, gaps)
    rest = 1.0 - t[-1]
    Zr, _ = continuum_pinning(alpha, h_hat, rest)
    return float(np.prod(zc) * Zr / Z1)


def continuum_pinning_kernel(alpha: float, h_hat: float) -> ProductKernel:
    """Continuum pinning correlations packaged as a product kernel on (0, 1)."""
    Z1 = float(continuum_pinning(alpha, h_hat, 1.0)[0])

    def step(p, q):
        d = (np.asarray(q, dtype=float) - np.asarray(p, dtype=float))[..., 0]
        out = np.zeros(d.shape)
        pos = d > 0
        if np.any(pos):
            dp = d[pos]
            out[pos] = alpha * dp ** (alpha - 1.0) * ml_derivative(alpha, h_hat * dp ** alpha)
        return out

    def terminal(q):
        r = 1.0 - np.asarray(q, dtype=float)[..., 0]
        out = np.zeros(r.shape)
        pos = r > 0
        out[pos] = mittag_leffler(alpha, h_hat * r[pos] ** alpha)
        return out

    return ProductKernel(step, terminal, normalizer=Z1, origin=(0.0,), stationary=True)


# -- discrete correlations and disordered partition functions -------------------

def discrete_pinning_correlation(kernel: RenewalKernel, h: float, N: int, indices) -> float:
    """psi_N^(k) = u(N)^{-k} P_{N,h}[n_1, ..., n_k in tau]."""
    idx = np.asarray(indices, dtype=int).reshape(-1)
    ZN, Zc = homogeneous_Z(kernel, h, N)
    if idx.size == 0:
        return 1.0
    gaps = np.diff(np.concatenate([[0], idx]))
    if np.any(gaps <= 0) or idx[-1] > N:
        return 0.0
    Zf = free_from_constrained(kernel, Zc)
    return float(np.prod(Zc[gaps]) * Zf[N - idx[-1]] / ZN / kernel.u[N] ** idx.size)


def discrete_pinning_kernel(kernel: RenewalKernel, h: float, N: int) -> ProductKernel:
    """Discrete correlations on sites 1..N as a product kernel (coordinates are site indices)."""
    ZN, Zc = homogeneous_Z(kernel, h, N)
    Zf = free_from_constrained(kernel, Zc)
    uN = kernel.u[N]

    def step(p, q):
        d = np.rint((np.asarray(q, dtype=float) - np.asarray(p, dtype=float))[..., 0]).astype(int)
        out = np.zeros(d.shape)
        pos = (d > 0) & (d <= N)
        out[pos] = Zc[d[pos]] / uN
        return out

    def terminal(q):
        n = np.rint(np.asarray(q, dtype=float)[..., 0]).astype(int)
        return Zf[np.clip(N - n, 0, N)]

    return ProductKernel(step, terminal, normalizer=ZN, origin=(0.0,), stationary=True)


@dataclass(frozen=True)
class PinningParams:
    N: int
    h: float
    beta: float
    h_hat: float = float("nan")
    beta_hat: float = float("nan")

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError("N must be >= 1")
        if not (0.0 <= self.beta <= 1.0):
            raise ParameterError("beta must lie in [0, 1] so that 1 + beta*omega > 0")

    @classmethod
    def from_targets(cls, kernel: RenewalKernel, law: TailLaw, N: int, h_hat: float,
                     beta_hat: float) -> "PinningParams":
        """h_N = h_hat / (N u(N)) and beta_N = beta_hat / (u(N) V_N), P[|omega| > V_N] = 1/N."""
        uN = kernel.u[N]
        V = solve_noise_scale(law, 1.0 / N)
        return cls(N, h_hat / (N * uN), beta_hat / (uN * V), h_hat, beta_hat)


def _disordered_table(kernel: RenewalKernel, params: PinningParams, disorder: np.ndarray):
    om = np.atleast_2d(np.asarray(disorder, dtype=float))
    N = params.N
    if om.shape[1] != N:
        raise ParameterError(f"disorder must have length N = {N}")
    w = np.empty((om.shape[0], N + 1))
    w[:, 0] = 1.0
    w[:, 1:] = math.exp(params.h) * (1.0 + params.beta * om)
    return renewal_solve(kernel.K, w)


def disordered_pinning_Z(kernel: RenewalKernel, params: PinningParams, disorder):
    """Z^{omega,beta}_{N,h} / Z_{N,h}, so that E_omega of the result is 1.

    ``disorder`` of shape (N,) gives a float, shape (R, N) an array of R values.
    """
    if params.N > kernel.N_max:
        raise ParameterError("N exceeds kernel.N_max")
    y = _disordered_table(kernel, params, disorder)
    ZN, _ = homogeneous_Z(kernel, params.h, params.N)
    Z = y @ kernel.Kbar[params.N::-1] / ZN
    return float(Z[0]) if np.ndim(disorder) == 1 else Z


def sample_pinning_gibbs(kernel: RenewalKernel, params: PinningParams, disorder, seed: int,
                         n_samples: int = 1, key: tuple = ()) -> list:
    """Exact backward sampling of tau cap [1, N] under the disordered Gibbs law."""
    y = _disordered_table(kernel, params, np.asarray(disorder, dtype=float).reshape(1, -1))[0]
    N = params.N
    gen = _rng.stream(seed, _rng.MC, *key)
    last_w = y * kernel.Kbar[N::-1]
    last_c = np.cumsum(last_w)
    out = []
    for _ in range(n_samples):
        sites = []
        m = int(np.searchsorted(last_c, gen.random() * last_c[-1], side="right"))
        while m > 0:
            sites.append(m)
            pw = y[:m] * kernel.K[m:0:-1]
            c = np.cumsum(pw)
            m = int(np.searchsorted(c, gen.random() * c[-1], side="right"))
        out.append(np.array(sites[::-1], dtype=int))
    return out


def contact_fraction(sites, N: int, kernel: RenewalKernel) -> float:
    """D_N = |tau cap [1, N]| / (N u(N))."""
    return len(sites) / (N * kernel.u[N])


def pinning_disorder_batch(law: TailLaw, N: int, replicas, seed: int) -> np.ndarray:
    """Disorder rows for the given replica indices, one stream per replica."""
    return np.stack([law.sample(N, _rng.stream(seed, _rng.DISORDER, int(r))) for r in replicas])


# -- exact continuum chaos for the pinning kernel -------------------------------

def _run_tables(alpha: float, h_hat: float, M: int, tol: float = 1e-18):
    """Linear coefficients of the Lebesgue-run weights.

    A run of j compensator points between two marked times at distance d
    contributes sum_m h^m C(m+j, j) G_{m+j+1}(d), and a trailing run
    contributes sum_m h^m C(m+j, j) H_{m+j}(d), with
    G_n(d) = d^{n alpha - 1} Gamma(alpha)^n / Gamma(n alpha) and
    H_n(d) = d^{n alpha} Gamma(alpha)^n / Gamma(n alpha + 1).
    The m-series is cut where every remaining coefficient is below ``tol``
    times the largest one; since d <= 1 the cut bounds the tail for all d.
    """
    lga = special.gammaln(alpha)
    lh = math.log(abs(h_hat)) if h_hat != 0 else -np.inf
    T = 16
    while True:
        m = np.arange(T)
        n = m[None, :] + np.arange(M + 1)[:, None]
        lbin = special.gammaln(n + 1) - special.gammaln(m + 1) - special.gammaln(n - m + 1)
        with np.errstate(invalid="ignore"):
            hm = np.where(m == 0, 0.0, m * lh)
        cg = hm + lbin + (n + 1) * lga - special.gammaln((n + 1) * alpha)
        ch = hm + lbin + n * lga - special.gammaln(n * alpha + 1)
        top = np.maximum(cg.max(axis=1), ch.max(axis=1))
        last = np.maximum(cg[:, -4:].max(axis=1), ch[:, -4:].max(axis=1))
        if np.all(last < top + math.log(tol)) or T >= 4096:
            break
        T *= 2
    sg = np.where((h_hat < 0) & (m % 2 == 1), -1.0, 1.0)
    return sg * np.exp(cg), sg * np.exp(ch)


@numba.njit(cache=True)
def _pinning_atom_dp(times, weights, lam, alpha, M, G, H, out):
    # times sorted in (0, 1); weights beta_hat * z; lam = -beta_hat * kappa
    n = times.shape[0]
    T = G.shape[1]
    A = np.zeros((n + 1, M + 1))
    A[0, 0] = 1.0
    tt = np.empty(n + 1)
    tt[0] = 0.0
    tt[1:] = times
    lamp = np.empty(M + 1)
    lamp[0] = 1.0
    for j in range(1, M + 1):
        lamp[j] = lamp[j - 1] * lam
    pw = np.empty(M + T + 1)
    R = np.empty(M + 1)
    for i in range(1, n + 1):
        for p in range(i):
            d = tt[i] - tt[p]
            if d <= 0.0:
                continue
            da = d ** alpha
            pw[0] = 1.0 / d
            for q in range(1, M + T + 1):
                pw[q] = pw[q - 1] * da
            for j in range(M):
                s = 0.0
                for m in range(T):
                    s += G[j, m] * pw[m + j + 1]
                R[j] = lamp[j] * s
            for kp in range(M):
                a = A[p, kp]
                if a == 0.0:
                    continue
                for j in range(M - kp):
                    A[i, kp + j + 1] += a * R[j]
        for k in range(M + 1):
            A[i, k] *= weights[i - 1]
    for i in range(n + 1):
        d = 1.0 - tt[i]
        if d <= 0.0:
            continue
        da = d ** alpha
        pw[0] = 1.0
        for q in range(1, M + T + 1):
            pw[q] = pw[q - 1] * da
        for j in range(M + 1):
            s = 0.0
            for m in range(T):
                s += H[j, m] * pw[m + j]
            s *= lamp[j]
            for kp in range(M + 1 - j):
                out[kp + j] += A[i, kp] * s


def continuum_pinning_chaos(alpha: float, h_hat: float, beta_hat: float, cloud: PointCloud,
                            max_order: int) -> ChaosResult:
    """Exact truncated chaos sum_{k<=M} beta_hat^k int psi^(k) prod zeta^(a) for the pinning kernel.

    Expanding zeta^(a) = atoms - kappa Lebesgue, the Lebesgue points between
    consecutive atoms integrate in closed form through the gamma-simplex
    identity, leaving a dynamic program over the time-sorted atoms that is
    exact at every order (no mesh, no quadrature).
    """
    if cloud.domain.dimension != 1 or cloud.domain.lower[0] != 0.0 or cloud.domain.upper[0] != 1.0:
        raise ParameterError("pinning chaos lives on the unit time interval")
    M = int(max_order)
    order = np.argsort(cloud.positions[:, 0], kind="stable")
    t = cloud.positions[order, 0].astype(float)
    w = beta_hat * cloud.marks[order]
    G, H = _run_tables(alpha, h_hat, M + 1)
    out = np.zeros(M + 1)
    _pinning_atom_dp(t, w, -beta_hat * cloud.kappa, alpha, M, G, H, out)
    Z1 = float(mittag_leffler(alpha, h_hat))
    out /= Z1
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite continuum chaos")
    return ChaosResult(out, M, {"method": "exact_pinning", "a": cloud.a, "atoms": cloud.count})


@functools.lru_cache(maxsize=16)
def _ml_table(alpha: float, z0: float, tol: float = 1e-14):
    """Chebyshev interpolants of x -> E_alpha(z0 x) and alpha E'_alpha(z0 x) on [0, 1].

    Both are entire in x, so the coefficients decay faster than geometrically;
    the degree is doubled until the trailing coefficients fall below ``tol``
    times the leading scale. Nodes are evaluated with the extended precision
    scalar path, so large negative z0 loses no digits to cancellation.
    """
    cheb = np.polynomial.chebyshev.Chebyshev
    out = []
    for fn in (lambda x: mittag_leffler(alpha, z0 * x),
               lambda x: alpha * ml_derivative(alpha, z0 * x)):
        deg = 32
        while True:
            p = cheb.interpolate(fn, deg, domain=[0.0, 1.0])
            c = np.abs(p.coef)
            if c[-3:].max() <= tol * c.max() or deg >= 1024:
                break
            deg *= 2
        out.append(p)
    return tuple(out)


def continuum_pinning_resummed(alpha: float, h_hat: float, beta_hat: float, cloud: PointCloud,
                               extended: bool = False) -> float:
    """All-order continuum pinning functional, summed in closed form.

    Summing the compensator runs over every order shifts the pinning
    parameter to h' = h_hat - beta_hat * kappa, so the full series equals
    E_alpha(h_hat)^{-1} sum over increasing atom chains of
    prod beta_hat z_i Zc_{h'}(gaps) Z_{h'}(1 - t_last). The kernel values
    come from cached Chebyshev interpolants; ``extended=True`` evaluates
    every Mittag-Leffler value directly instead (slow, used as an oracle).
    """
    if cloud.domain.dimension != 1 or cloud.domain.lower[0] != 0.0 or cloud.domain.upper[0] != 1.0:
        raise ParameterError("pinning chaos lives on the unit time interval")
    hp = float(h_hat - beta_hat * cloud.kappa)
    if extended:
        def kern(d):
            return continuum_pinning(alpha, hp, d)
    else:
        pE, pD = _ml_table(float(alpha), hp)

        def kern(d):
            x = d ** alpha
            return pE(x), d ** (alpha - 1.0) * pD(x)
    order = np.argsort(cloud.positions[:, 0], kind="stable")
    t = np.concatenate([[0.0], cloud.positions[order, 0].astype(float)])
    w = beta_hat * cloud.marks[order]
    n = t.size - 1
    A = np.zeros(n + 1)
    A[0] = 1.0
    for i in range(1, n + 1):
        gaps = t[i] - t[:i]
        ok = gaps > 0
        if np.any(ok):
            _, zc = kern(gaps[ok])
            A[i] = w[i - 1] * float(np.dot(A[:i][ok], np.atleast_1d(zc)))
    rest = 1.0 - t
    ok = rest > 0
    zr, _ = kern(rest[ok])
    return float(np.dot(A[ok], np.atleast_1d(zr)) / mittag_leffler(alpha, h_hat))


def select_truncation(per_order: np.ndarray, tol: float = 1e-3) -> int:
    """Smallest M whose mean absolute tail |sum_{k>M} X_k| over replicas is below ``tol``.

    ``per_order`` has one row per replica and one column per chaos order.
    Raises NumericalError if even the last computed order misses ``tol``
    (the tail beyond the computed orders is then unknown).
    """
    X = np.atleast_2d(np.asarray(per_order, dtype=float))
    tails = np.abs(np.cumsum(X[:, ::-1], axis=1)[:, ::-1])
    mean_tail = np.concatenate([tails[:, 1:].mean(axis=0), [0.0]])
    ok = np.nonzero(mean_tail[:-1] < tol)[0]
    if ok.size == 0:
        raise NumericalError("truncation tolerance not reached within the computed orders")
    return int(ok[0])
