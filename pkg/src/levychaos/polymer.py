"""Long-range directed polymer in heavy-tailed space-time disorder.

The reference walk has i.i.d. increments X = round(Y) with Y symmetric
alpha-stable, characteristic function exp(-|t|^alpha) for Y, and norming
a_n = n^(1/alpha). The disordered partition function is

    Z_N = E[ prod_{n=1}^N (1 + beta omega_{n, S_n}) ; S stays in the window ],

computed by a transfer-matrix DP. Lattice probabilities come from the exact
characteristic function of the rounded increment, so they carry no window
truncation error.
"""
from __future__ import annotations

import functools
import math
import struct
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import fft as sfft
from scipy import integrate, interpolate, special, stats

from . import rng as _rng
from .chaos import ProductKernel
from .errors import CapacityError, GateError, NumericalError, ParameterError
from .heavy_tail import TailLaw, solve_noise_scale
from .levy_noise import PointCloud

REPLICA_CHUNK = 250
FREE_DEFECT = 1e-3
DIRECT_WIDTH = 128
_GRID_HEADER = struct.Struct("<qqdQ")


# -- walks -------------------------------------------------------------------------

@dataclass(frozen=True)
class StableWalk:
    """Lattice walk with rounded symmetric alpha-stable increments.

    d >= 2 is experimental: coordinates are independent one-dimensional
    walks, so the limit is a (non-isotropic) product stable law.
    """

    alpha: float
    d: int = 1
    experimental: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if int(self.d) < 1:
            raise ParameterError("d must be a positive integer")
        if self.d > 1 and not self.experimental:
            raise ParameterError("d >= 2 requires experimental=True")

    def a_n(self, n) -> float:
        return float(n) ** (1.0 / self.alpha)

    def sample_increments(self, size: int, gen: np.random.Generator) -> np.ndarray:
        y = stats.levy_stable.rvs(self.alpha, 0.0, size=(int(size), self.d), random_state=gen)
        return np.rint(y).astype(np.int64)


def sample_walk(walk: StableWalk, N: int, seed: int, key: tuple = ()) -> np.ndarray:
    """Positions S_1..S_N of one walk started at 0, shape (N,) for d = 1 else (N, d)."""
    if int(N) < 1:
        raise ParameterError("N must be >= 1")
    s = np.cumsum(walk.sample_increments(N, _rng.stream(seed, _rng.WALK, *key)), axis=0)
    return s[:, 0] if walk.d == 1 else s


def walk_maxima(walk: StableWalk, N: int, paths: int, seed: int, chunk: int = 2000) -> np.ndarray:
    """max_{n <= N} |S_n| for independent paths (sup norm over coordinates)."""
    out = np.empty(int(paths))
    for c, start in enumerate(range(0, int(paths), chunk)):
        m = min(chunk, int(paths) - start)
        gen = _rng.stream(seed, _rng.WALK, 1, c)
        y = stats.levy_stable.rvs(walk.alpha, 0.0, size=(m, int(N), walk.d), random_state=gen)
        s = np.cumsum(np.rint(y), axis=1)
        out[start:start + m] = np.abs(s).max(axis=(1, 2))
    return out


# -- stable densities ------------------------------------------------------------

TAIL_RADIUS = 30.0
TAIL_REL = 1e-12


def _density_quad(alpha: float, x: float) -> float:
    x = abs(float(x))
    if x == 0.0:
        return special.gamma(1.0 + 1.0 / alpha) / math.pi
    T = 42.0 ** (1.0 / alpha)  # exp(-T^alpha) < 1e-18
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(lambda t: math.exp(-t ** alpha), 0.0, T, weight="cos", wvar=x,
                                  limit=2000, epsabs=1e-15, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-10:
        raise NumericalError(f"stable density quadrature failed at x={x}: error estimate {err}")
    return val / math.pi


def _density_tail(alpha: float, x):
    """Tail series (1/pi) sum_k (-1)^{k+1} Gamma(alpha k + 1)/k! sin(pi alpha k/2) |x|^{-alpha k - 1}.

    Convergent for alpha < 1, asymptotic for alpha > 1 (summed up to the
    smallest term). Returns values and the size of the last term used.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.zeros(ax.shape)
    err = np.full(ax.shape, np.inf)
    active = np.ones(ax.shape, dtype=bool)
    lx = np.log(np.maximum(ax, 1e-300))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, 200):
            sn = math.sin(math.pi * alpha * k / 2.0)
            if abs(sn) < 1e-12:
                continue
            lc = special.gammaln(alpha * k + 1) - special.gammaln(k + 1) + math.log(abs(sn))
            size = np.exp(lc - (alpha * k + 1.0) * lx)
            grow = active & (size > err)
            active &= ~grow
            out = np.where(active, out + (-1) ** (k + 1) * math.copysign(1.0, sn) * size, out)
            err = np.where(active, size, err)
            active &= size > 1e-18 * np.abs(out)
            if not np.any(active):
                break
    return out / math.pi, err / math.pi


def stable_density(alpha: float, x, d: int = 1) -> np.ndarray:
    """Density g_1 of the symmetric stable law with characteristic function exp(-|t|^alpha).

    The tail series is used where its last term is below 1e-12 relative,
    oscillatory Fourier quadrature elsewhere. For d >= 2 the product density
    of independent coordinates (last axis).
    """
    if not (0.0 < alpha <= 2.0):
        raise ParameterError("alpha must lie in (0, 2]")
    xs = np.asarray(x, dtype=float)
    if d > 1:
        return np.prod(stable_density(alpha, xs, 1), axis=-1)
    if alpha == 2.0:
        # Gaussian with variance 2; quadrature would floor at ~1e-17 absolute in the tails
        return np.exp(-xs ** 2 / 4.0) / math.sqrt(4.0 * math.pi)
    flat = xs.reshape(-1)
    out = np.empty(flat.size)
    use = np.zeros(flat.size, dtype=bool)
    if alpha < 2.0:
        tv, te = _density_tail(alpha, flat)
        use = (flat != 0) & (te < TAIL_REL * np.abs(tv))
        out[use] = tv[use]
    for i in np.nonzero(~use)[0]:
        out[i] = _density_quad(alpha, flat[i])
    out = out.reshape(xs.shape)
    return out[()] if out.ndim == 0 else out


class StableDensity:
    """Cached g_1: cubic spline of quadrature values on [0, TAIL_RADIUS] plus the tail series.

    ``g(t, x)`` applies the exact scaling g_t(x) = t^(-d/alpha) g_1(x t^(-1/alpha)).
    """

    def __init__(self, alpha: float, d: int = 1, h: float = 0.01):
        self.alpha = float(alpha)
        self.d = int(d)
        nodes = np.linspace(0.0, TAIL_RADIUS, int(round(TAIL_RADIUS / h)) + 1)
        vals = stable_density(self.alpha, nodes)
        self._spline = interpolate.CubicSpline(nodes, vals, bc_type=((1, 0.0), "not-a-knot"))

    def g1(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        near = ax <= TAIL_RADIUS
        out = np.where(near, self._spline(np.minimum(ax, TAIL_RADIUS)), 0.0)
        if np.any(~near):
            out[~near] = stable_density(self.alpha, ax[~near])
        return out

    def __call__(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        if self.d > 1:
            return np.prod(self.g1(xs), axis=-1)
        return self.g1(xs)

    def g(self, t, x) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = t ** (-1.0 / self.alpha)
        xs = np.asarray(x, dtype=float)
        if self.d > 1:
            return s ** self.d * np.prod(self.g1(xs * s[..., None]), axis=-1)
        return s * self.g1(xs * s)


@functools.lru_cache(maxsize=8)
def density_cache(alpha: float, d: int = 1) -> StableDensity:
    return StableDensity(alpha, d)


# -- lattice probabilities -------------------------------------------------------------

def _step_cf(alpha: float, theta: np.ndarray) -> np.ndarray:
    """Characteristic function of round(Y) on [-pi, pi] by Poisson summation.

    P(X = k) = (g_1 * 1_[-1/2, 1/2])(k), whose Fourier transform is
    exp(-|u|^alpha) sin(u/2)/(u/2); sampling at integers periodizes it.
    """
    K = 1
    while math.exp(-((2 * K - 1) * math.pi) ** alpha) / ((2 * K - 1) * math.pi) > 1e-18:
        K += 1
    out = np.zeros_like(theta)
    for k in range(-K, K + 1):
        u = theta + 2.0 * math.pi * k
        out += np.exp(-np.abs(u) ** alpha) * np.sinc(u / (2.0 * math.pi))
    return out


def _fft_pmf(alpha: float, n: int, width: int, period: int) -> np.ndarray:
    theta = 2.0 * math.pi * np.arange(period // 2 + 1) / period
    phi = _step_cf(alpha, theta) ** n
    p = np.fft.irfft(phi, period)
    idx = np.arange(-width, width + 1) % period
    return np.maximum(p[idx], 0.0)


def _pow2(x: int) -> int:
    return 1 << max(12, int(math.ceil(math.log2(max(int(x), 2)))))


def _tail_window(walk: StableWalk, n: int, tol: float) -> int:
    """Window w with P(|S_n| > w) <= tol by the stable tail (Gaussian bound at alpha = 2)."""
    a = walk.a_n(n)
    if walk.alpha >= 2.0:
        return int(math.ceil(a * 2.0 * math.sqrt(math.log(2.0 / tol)) + 1))
    c = 2.0 * special.gamma(walk.alpha) * math.sin(math.pi * walk.alpha / 2.0) / math.pi
    return int(math.ceil(a * (2.0 * c / tol) ** (1.0 / walk.alpha)))


@dataclass(frozen=True)
class LatticePMF:
    """Probabilities on the integers lo..lo+len-1 with the mass outside recorded as ``defect``."""

    lo: int
    probs: np.ndarray
    defect: float

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + len(self.probs))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.int64)
        i = x - self.lo
        ok = (i >= 0) & (i < len(self.probs))
        out = np.where(ok, self.probs[np.clip(i, 0, len(self.probs) - 1)], 0.0)
        return out[()] if out.ndim == 0 else out


def step_pmf(walk: StableWalk, width: int) -> LatticePMF:
    """Single-increment pmf on [-width, width]."""
    w = int(width)
    p = _fft_pmf(walk.alpha, 1, w, _pow2(8 * (2 * w + 1)))
    return LatticePMF(-w, p, float(max(0.0, 1.0 - p.sum())))


def walk_pmf(walk: StableWalk, n: int, window: int, mass_tol: float | None = 1e-8) -> LatticePMF:
    """P(S_n = x) for |x| <= window (d = 1).

    The n-fold convolution is evaluated exactly in Fourier space: phi^n is
    inverted on a period of at least four windows and 64 a_n, so the only
    error is aliasing of mass beyond half a period.
    """
    if walk.d != 1:
        raise ParameterError("walk_pmf supports d = 1")
    if int(n) < 1 or int(window) < 0:
        raise ParameterError("n must be >= 1 and window >= 0")
    w = int(window)
    period = _pow2(max(4 * (2 * w + 1), 64 * walk.a_n(n)))
    p = _fft_pmf(walk.alpha, int(n), w, period)
    defect = float(max(0.0, 1.0 - p.sum()))
    if mass_tol is not None and defect > mass_tol:
        raise CapacityError(f"window {w} leaves mass {defect:.3g} > {mass_tol:g} outside; "
                            f"suggested window {_tail_window(walk, int(n), mass_tol)}")
    return LatticePMF(-w, p, defect)


def llt_error(walk: StableWalk, n: int, span: float = 20.0) -> float:
    """sup_x |a_n P(S_n = x) - g_1(x / a_n)| over |x| <= span a_n."""
    a = walk.a_n(n)
    w = int(math.ceil(span * a))
    pmf = walk_pmf(walk, n, w, mass_tol=None)
    dens = density_cache(walk.alpha)
    return float(np.max(np.abs(a * pmf.probs - dens(pmf.support / a))))


@dataclass
class LLTReport:
    ns: list
    errors: list

    @property
    def monotone(self) -> bool:
        e = np.asarray(self.errors)
        return bool(np.all(np.diff(e) <= 0))

    def to_dict(self) -> dict:
        return {"n": list(self.ns), "sup_error": list(self.errors), "monotone": self.monotone}


def llt_check(walk: StableWalk, ns=(256, 512, 1024, 2048)) -> LLTReport:
    return LLTReport([int(n) for n in ns], [llt_error(walk, int(n)) for n in ns])


# -- parameters ------------------------------------------------------------------------

def check_polymer_gate(alpha: float, gamma: float, d: int = 1, force: bool = False) -> None:
    """Refuse gamma >= 1 + alpha / d unless forced."""
    if not gamma < 1.0 + alpha / d:
        msg = (f"heavy-tail Harris criterion violated: gamma = {gamma} >= 1 + alpha/d = {1 + alpha / d}; "
               "the rescaled polymer chaos has no intermediate-disorder limit")
        if not force:
            raise GateError(msg)


@dataclass(frozen=True)
class PolymerParams:
    """Polymer length, coupling and window; beta = beta_hat a_N^d / V_N from targets."""

    N: int
    beta: float
    A: float
    law: TailLaw
    alpha: float
    d: int = 1
    beta_hat: float | None = None
    V_N: float | None = None

    def __post_init__(self):
        if int(self.N) < 1:
            raise ParameterError("N must be >= 1")
        if self.beta < 0:
            raise ParameterError("beta must be non-negative")
        if self.law.one_sided and self.beta > 1:
            raise ParameterError("beta > 1 breaks positivity of 1 + beta omega for omega > -1")
        if self.A <= 0:
            raise ParameterError("A must be positive")

    @classmethod
    def from_targets(cls, walk: StableWalk, law: TailLaw, N: int, beta_hat: float, A: float = 4.0,
                     force: bool = False) -> "PolymerParams":
        check_polymer_gate(walk.alpha, law.gamma, walk.d, force)
        aN = walk.a_n(N)
        V = solve_noise_scale(law, 1.0 / (N * aN ** walk.d))
        return cls(int(N), beta_hat * aN ** walk.d / V, float(A), law, walk.alpha, walk.d, beta_hat, V)

    @property
    def a_N(self) -> float:
        return float(self.N) ** (1.0 / self.alpha)

    @property
    def window(self) -> int:
        """Hard window half-width L = ceil(2 A a_N)."""
        return int(math.ceil(2.0 * self.A * self.a_N))


# -- disorder fields -----------------------------------------------------------------------

def _shell_order(L: int) -> np.ndarray:
    # position x = -L..L is drawn as the shell(x)-th value: 0, 1, -1, 2, -2, ...
    x = np.arange(-L, L + 1)
    return np.where(x > 0, 2 * x - 1, -2 * x)


def disorder_rows(law: TailLaw, seed: int, n: int, chunk_id: int, L: int) -> np.ndarray:
    """Disorder at time n for the REPLICA_CHUNK replicas of one chunk, shape (REPLICA_CHUNK, 2L+1).

    Values are drawn shell by shell outwards from the origin, so the field on
    [-L, L] is the same for every window containing it: nested windows share
    disorder exactly.
    """
    vals = law.sample((2 * L + 1, REPLICA_CHUNK), _rng.stream(seed, _rng.DISORDER, n, chunk_id))
    return vals[_shell_order(L)].T


def polymer_disorder_field(law: TailLaw, N: int, L: int, seed: int, replica: int = 0) -> np.ndarray:
    """Field omega_{n, x}, n = 1..N, |x| <= L, of one replica, shape (N, 2L+1)."""
    c, r = divmod(int(replica), REPLICA_CHUNK)
    return np.stack([disorder_rows(law, seed, n, c, L)[r] for n in range(1, N + 1)])


def write_disorder_grid(path, field_: np.ndarray, gamma: float, seed: int) -> None:
    """Binary grid: header {N, L, gamma, seed}, then row-major little-endian float64."""
    f = np.asarray(field_, dtype="<f8")
    N, W = f.shape
    if W % 2 != 1:
        raise ParameterError("field width must be 2L+1")
    with open(path, "wb") as fh:
        fh.write(_GRID_HEADER.pack(N, (W - 1) // 2, float(gamma), int(seed)))
        fh.write(f.tobytes(order="C"))


def read_disorder_grid(path):
    """Inverse of write_disorder_grid; returns (field, {"N", "L", "gamma", "seed"})."""
    with open(path, "rb") as fh:
        buf = fh.read()
    N, L, g, seed = _GRID_HEADER.unpack_from(buf, 0)
    body = np.frombuffer(buf, dtype="<f8", offset=_GRID_HEADER.size)
    if body.size != N * (2 * L + 1):
        raise ParameterError("grid file size does not match its header")
    return body.reshape(N, 2 * L + 1).copy(), {"N": N, "L": L, "gamma": g, "seed": seed}


# -- transfer-matrix DP ------------------------------------------------------------------------

class _Propagator:
    """Z_new[x] = sum_y Z[y] p(x - y) on a window of width W; p holds offsets -(W-1)..(W-1).

    Small windows use an exact Toeplitz product, large ones a real FFT with
    the kernel transform computed once.
    """

    def __init__(self, p: np.ndarray, W: int):
        self.W = W
        if W <= DIRECT_WIDTH:
            i = np.arange(W)
            self.T = p[i[None, :] - i[:, None] + W - 1]
        else:
            self.T = None
            # circular length >= 2W - 1 keeps the needed slice free of wrap-around
            self.nfft = sfft.next_fast_len(2 * W - 1, real=True)
            self.P = sfft.rfft(p, self.nfft)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        if self.T is not None:
            return Z @ self.T
        full = sfft.irfft(sfft.rfft(Z, self.nfft, axis=1) * self.P, self.nfft, axis=1)
        return full[:, self.W - 1:2 * self.W - 1]


def _transfer(walk: StableWalk, L: int):
    W = 2 * L + 1
    p = step_pmf(walk, 2 * L).probs
    # probability that one step from y leaves the window
    inside = np.convolve(p, np.ones(W), mode="valid")[::-1]  # inside[y] = sum_x p(x - y)
    return _Propagator(p, W), np.maximum(1.0 - inside, 0.0)


@dataclass
class PolymerResult:
    """Partition functions of a replica batch with window diagnostics.

    ``mass`` is the homogeneous window mass E_omega[Z]; ``defect`` is the
    per-replica killed weight relative to Z plus killed weight.
    """

    Z: np.ndarray
    mass: float
    L: int
    mode: str
    defect: np.ndarray
    homogeneous_defect: float
    metadata: dict = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        return self.Z / self.mass


def _dp(walk: StableWalk, N: int, L: int, beta: float, rows):
    """Run the DP; ``rows(n)`` returns the (R, 2L+1) disorder at time n."""
    prop, leave = _transfer(walk, L)
    W = 2 * L + 1
    Z = None
    hom = np.zeros((1, W))
    hom[0, L] = 1.0
    hom_killed = 0.0
    killed = None
    for n in range(1, N + 1):
        om = rows(n)
        if Z is None:
            Z = np.zeros((om.shape[0], W))
            Z[:, L] = 1.0
            killed = np.zeros(om.shape[0])
        killed += Z @ leave
        hom_killed += float(np.sum(hom @ leave))
        Z = prop(Z) * (1.0 + beta * om)
        hom = prop(hom)
    Zt = Z.sum(axis=1)
    mass = float(hom.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        defect = np.where(np.abs(Zt) + killed > 0, killed / (np.abs(Zt) + killed), 0.0)
    return Zt, mass, defect, hom_killed / (mass + hom_killed)


def free_window(walk: StableWalk, N: int, budget: float = FREE_DEFECT) -> int:
    """Half-width whose homogeneous killed mass over N steps is at most ``budget``."""
    L = max(8, int(math.ceil(_tail_window(walk, N, budget))))
    while True:
        *_, hd = _dp(walk, N, L, 0.0, lambda n: np.zeros((1, 2 * L + 1)))
        if hd <= budget:
            return L
        L = int(math.ceil(1.25 * L))


def _resolve_window(walk, params, mode, window):
    if mode == "hard_window":
        return params.window if window is None else int(window)
    if mode == "free_window":
        return free_window(walk, params.N) if window is None else int(window)
    raise ParameterError(f"unknown mode {mode!r}")


def _check_free(res: PolymerResult, walk, N):
    if res.mode == "free_window" and res.homogeneous_defect > FREE_DEFECT:
        raise CapacityError(f"free window {res.L} leaves homogeneous mass {res.homogeneous_defect:.3g} "
                            f"> {FREE_DEFECT:g} outside; suggested window {free_window(walk, N)}")


def disordered_polymer_Z(walk: StableWalk, params: PolymerParams, disorder_field,
                         mode: str = "hard_window", window: int | None = None) -> PolymerResult:
    """Z for explicit disorder of shape (N, 2L'+1) or (R, N, 2L'+1) centred at x = 0, L' >= L."""
    L = _resolve_window(walk, params, mode, window)
    f = np.asarray(disorder_field, dtype=float)
    single = f.ndim == 2
    f = f[None] if single else f
    if f.shape[1] < params.N or f.shape[2] % 2 != 1 or (f.shape[2] - 1) // 2 < L:
        raise ParameterError(f"disorder field must cover [1..{params.N}] x [-{L}..{L}]")
    c = (f.shape[2] - 1) // 2
    sub = f[:, :, c - L:c + L + 1]
    Z, mass, defect, hd = _dp(walk, params.N, L, params.beta, lambda n: sub[:, n - 1, :])
    res = PolymerResult(Z[0] if single else Z, mass, L, mode, defect, hd)
    _check_free(res, walk, params.N)
    return res


def polymer_Z_batch(walk: StableWalk, params: PolymerParams, replicas: int, seed: int,
                    mode: str = "hard_window", window: int | None = None, first_chunk: int = 0) -> PolymerResult:
    """Z for replicas 0..replicas-1 (chunks of REPLICA_CHUNK) with streamed disorder."""
    L = _resolve_window(walk, params, mode, window)
    Zs, defects = [], []
    mass = hd = None
    n_chunks = -(-int(replicas) // REPLICA_CHUNK)
    for c in range(first_chunk, first_chunk + n_chunks):
        Z, mass, defect, hd = _dp(walk, params.N, L, params.beta,
                                  lambda n, c=c: disorder_rows(params.law, seed, n, c, L))
        Zs.append(Z)
        defects.append(defect)
    res = PolymerResult(np.concatenate(Zs)[:replicas], mass, L, mode, np.concatenate(defects)[:replicas], hd)
    _check_free(res, walk, params.N)
    return res


def enumerate_polymer_Z(walk: StableWalk, N: int, L: int, beta: float, disorder_field) -> float:
    """Oracle: sum over all windowed lattice paths of prod p(step) (1 + beta omega)."""
    W = 2 * L + 1
    if W ** N > 5 * 10 ** 6:
        raise CapacityError(f"{W}^{N} paths exceed the enumeration budget")
    p = step_pmf(walk, 2 * L).probs
    f = np.asarray(disorder_field, dtype=float)
    c = (f.shape[1] - 1) // 2
    # all windowed paths, one time slice at a time (vectorized)
    weight = np.ones(1)
    prev = np.zeros(1, dtype=np.int64)
    for n in range(N):
        xs = np.arange(-L, L + 1)
        new_prev = np.repeat(prev, W)
        x = np.tile(xs, len(prev))
        weight = np.repeat(weight, W) * p[x - new_prev + 2 * L] * (1.0 + beta * f[n, c + x])
        prev = x
    return float(math.fsum(weight))


# -- correlation kernels ---------------------------------------------------------------------------

def discrete_polymer_kernel(walk: StableWalk, N: int, L: int | None = None, free_width: int | None = None):
    """psi_N^(k) = a_N^k P[S visits (n_j, x_j) for all j (, stays in [-L, L])] on points (n, x).

    With a window L the steps are killed transition probabilities (powers
    of the windowed step matrix) and psi^(0) is the survival mass; without
    one, steps are free lattice probabilities and psi^(0) = 1.
    """
    aN = walk.a_n(N)
    if L is not None:
        W = 2 * L + 1
        p = step_pmf(walk, 2 * L).probs
        i = np.arange(W)
        Q = p[i[None, :] - i[:, None] + W - 1]
        pw = np.empty((N + 1, W, W))
        pw[0] = np.eye(W)
        for k in range(1, N + 1):
            pw[k] = pw[k - 1] @ Q
        surv = pw.sum(axis=2)

        def step(prev, cur):
            prev, cur = np.broadcast_arrays(np.asarray(prev, float), np.asarray(cur, float))
            dn = np.rint(cur[..., 0] - prev[..., 0]).astype(int)
            xi = np.rint(prev[..., 1]).astype(int) + L
            xj = np.rint(cur[..., 1]).astype(int) + L
            ok = (dn > 0) & (dn <= N) & (xi >= 0) & (xi < W) & (xj >= 0) & (xj < W)
            v = pw[np.clip(dn, 0, N), np.clip(xi, 0, W - 1), np.clip(xj, 0, W - 1)]
            return np.where(ok, aN * v, 0.0)

        def terminal(q):
            q = np.asarray(q, float)
            n = np.rint(q[..., 0]).astype(int)
            x = np.rint(q[..., 1]).astype(int) + L
            return surv[np.clip(N - n, 0, N), np.clip(x, 0, W - 1)]

        return ProductKernel(step, terminal, 1.0, time_axis=0, origin=(0.0, 0.0))

    width = free_width if free_width is not None else _tail_window(walk, N, 1e-6)
    cache = {}

    def pmf(dn):
        if dn not in cache:
            cache[dn] = walk_pmf(walk, dn, width, mass_tol=None)
        return cache[dn]

    def step(prev, cur):
        prev, cur = np.broadcast_arrays(np.asarray(prev, float), np.asarray(cur, float))
        dn = np.rint(cur[..., 0] - prev[..., 0]).astype(int)
        dx = np.rint(cur[..., 1] - prev[..., 1]).astype(int)
        out = np.zeros(dn.shape)
        for k in np.unique(dn[dn > 0]):
            sel = dn == k
            out[sel] = aN * pmf(int(k))(dx[sel])
        return out

    def terminal(q):
        return np.ones(np.asarray(q).shape[:-1])

    return ProductKernel(step, terminal, 1.0, time_axis=0, origin=(0.0, 0.0), stationary=True)


def continuum_polymer_kernel(alpha: float, d: int = 1) -> ProductKernel:
    """psi^(k)((t_j, x_j)) = prod g_{t_j - t_{j-1}}(x_j - x_{j-1}) on (0, 1] x R^d."""
    dens = density_cache(alpha, d)

    def step(prev, cur):
        prev, cur = np.broadcast_arrays(np.asarray(prev, float), np.asarray(cur, float))
        dt = cur[..., 0] - prev[..., 0]
        out = np.zeros(dt.shape)
        pos = dt > 0
        if np.any(pos):
            dx = (cur[..., 1:] - prev[..., 1:])[pos]
            out[pos] = dens.g(dt[pos], dx[:, 0] if d == 1 else dx)
        return out

    def terminal(q):
        return np.ones(np.asarray(q).shape[:-1])

    return ProductKernel(step, terminal, 1.0, time_axis=0, origin=(0.0,) * (d + 1), stationary=True)


def polymer_kernel(walk: StableWalk, level: str = "continuum", N: int | None = None, L: int | None = None):
    """Dispatch to the discrete (level="discrete", needs N) or continuum kernel."""
    if level == "continuum":
        return continuum_polymer_kernel(walk.alpha, walk.d)
    if level == "discrete":
        if N is None:
            raise ParameterError("discrete polymer kernel needs N")
        return discrete_polymer_kernel(walk, int(N), L)
    raise ParameterError(f"unknown level {level!r}")


# -- continuum proxy -------------------------------------------------------------------------------

def lattice_fractional_coefficients(alpha: float, K: int) -> np.ndarray:
    """c_k with sum_k c_k e^{ik theta} = |2 sin(theta/2)|^alpha, k = 0..K."""
    c = np.empty(K + 1)
    c[0] = math.exp(special.gammaln(alpha + 1) - 2.0 * special.gammaln(alpha / 2.0 + 1))
    for k in range(K):
        c[k + 1] = c[k] * (k - alpha / 2.0) / (k + alpha / 2.0 + 1.0)
    return c


@dataclass(frozen=True)
class KilledSemigroup:
    """Stable semigroup on [-R, R] killed on exit, on a grid of spacing h.

    The generator is the lattice fractional Laplacian -h^-alpha T with
    symbol |2 sin(theta/2)|^alpha restricted to the grid; its eigenbasis
    gives exp(t G) for any t, so atom times need no time mesh.
    """

    alpha: float
    R: float
    h: float
    grid: np.ndarray
    rates: np.ndarray
    basis: np.ndarray
    ones: np.ndarray

    @classmethod
    def build(cls, alpha: float, R: float, h: float) -> "KilledSemigroup":
        n = int(round(R / h))
        if n < 2 or abs(n * h - R) > 1e-9 * R:
            raise ParameterError("R must be a multiple of h")
        grid = np.linspace(-R, R, 2 * n + 1)
        W = grid.size
        c = lattice_fractional_coefficients(alpha, W)
        i = np.arange(W)
        T = c[np.abs(i[:, None] - i[None, :])]
        lam, V = np.linalg.eigh(T)
        return cls(alpha, R, h, grid, lam * h ** (-alpha), V, V.sum(axis=0))

    def survival(self, t: float, x: float = 0.0) -> float:
        a, b, wa, wb = _interp(self.grid, self.h, x)
        v = wa * self.basis[a] + wb * self.basis[b]
        return float(np.dot(self.ones * np.exp(-t * self.rates), v))


def _interp(grid, h, x):
    j = (x - grid[0]) / h
    a = int(min(max(math.floor(j), 0), grid.size - 2))
    wb = j - a
    return a, a + 1, 1.0 - wb, wb


@numba.njit(cache=True)
def _proxy_dp(times, xs, weights, grid0, h, rates, basis, ones):
    W = rates.shape[0]
    # initial mass at the grid node nearest to 0 (0 is a node)
    i0 = int(round(-grid0 / h))
    mu = basis[i0].copy()
    t = 0.0
    for j in range(times.shape[0]):
        dt = times[j] - t
        for m in range(W):
            mu[m] *= math.exp(-dt * rates[m])
        t = times[j]
        pos = (xs[j] - grid0) / h
        a = int(math.floor(pos))
        if a < 0:
            a = 0
        if a > W - 2:
            a = W - 2
        wb = pos - a
        wa = 1.0 - wb
        dens = 0.0
        for m in range(W):
            dens += (wa * basis[a, m] + wb * basis[a + 1, m]) * mu[m]
        c = weights[j] * dens / h
        for m in range(W):
            mu[m] += c * (wa * basis[a, m] + wb * basis[a + 1, m])
    tot = 0.0
    dt = 1.0 - t
    for m in range(W):
        tot += ones[m] * mu[m] * math.exp(-dt * rates[m])
    return tot


def continuum_polymer_proxy(semigroup: KilledSemigroup, cloud: PointCloud, beta_hat: float) -> float:
    """All-order continuum partition function of the window-killed polymer on a point cloud.

    Expanding zeta^(a) into atoms and -kappa Lebesgue, Lebesgue runs
    integrate by Chapman-Kolmogorov to exp(-beta_hat kappa dt), so
    Z = exp(-beta_hat kappa) E[prod over atoms on the path of (1 + beta_hat z delta)],
    evaluated by propagating the killed semigroup between atom times.
    """
    dom = cloud.domain
    if dom.dimension != 2 or dom.lower[0] != 0.0 or dom.upper[0] != 1.0:
        raise ParameterError("polymer cloud must live on [0, 1] x [-R, R]")
    if abs(dom.lower[1] + semigroup.R) > 1e-12 or abs(dom.upper[1] - semigroup.R) > 1e-12:
        raise ParameterError("cloud spatial extent must match the semigroup window")
    order = np.argsort(cloud.positions[:, 0], kind="stable")
    t = np.ascontiguousarray(cloud.positions[order, 0])
    x = np.ascontiguousarray(cloud.positions[order, 1])
    w = beta_hat * cloud.marks[order]
    val = _proxy_dp(t, x, w, float(semigroup.grid[0]), semigroup.h, semigroup.rates,
                    np.ascontiguousarray(semigroup.basis), semigroup.ones)
    out = math.exp(-beta_hat * cloud.kappa) * val
    if not np.isfinite(out):
        raise NumericalError("non-finite polymer proxy")
    return out
