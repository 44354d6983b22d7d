"""Truncated gamma-stable Levy white noise on a box.

The noise zeta^(a) keeps the atoms of a Poisson point process on
Omega x R with intensity dx * lambda(dz),

    lambda(dz) = (c_plus 1{z>0} + c_minus 1{z<0}) gamma |z|**(-1-gamma) dz,

whose marks satisfy |z| > a, and subtracts the compensator kappa(a) dx with
kappa(a) = int_{|z|>a} z lambda(dz).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import rng as _rng
from .errors import CapacityError, NumericalError, ParameterError

MAX_EXPECTED_ATOMS = 5e7
_HEADER = struct.Struct("<qdddq")


@dataclass(frozen=True)
class DomainBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ParameterError("lower and upper must have the same positive length")
        if any(not (h > l) for l, h in zip(lo, hi)) or not np.all(np.isfinite(lo + hi)):
            raise ParameterError("box must satisfy lower < upper with finite bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, D: int = 1) -> "DomainBox":
        return cls((0.0,) * D, (1.0,) * D)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def uniform(self, n: int, gen: np.random.Generator) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * gen.random((n, self.dimension))


def compensator(gamma: float, c_plus: float, c_minus: float, a: float) -> float:
    """kappa(a) = (c_plus - c_minus) gamma / (gamma - 1) a**(1 - gamma)."""
    return (c_plus - c_minus) * gamma / (gamma - 1.0) * a ** (1.0 - gamma)


def _check_noise(gamma, c_plus, c_minus, a):
    if not (1.0 < gamma < 2.0):
        raise ParameterError(f"gamma must lie in (1, 2), got {gamma}")
    if c_plus < 0 or c_minus < 0 or abs(c_plus + c_minus - 1.0) > 1e-12:
        raise ParameterError("c_plus and c_minus must be non-negative and sum to 1")
    if not a > 0:
        raise ParameterError(f"truncation level a must be positive, got {a}")


@dataclass(frozen=True)
class PointCloud:
    """One realization of zeta^(a): atom positions (n, D) and marks (n,)."""

    domain: DomainBox
    gamma: float
    c_plus: float
    c_minus: float
    a: float
    positions: np.ndarray = field(repr=False)
    marks: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_noise(self.gamma, self.c_plus, self.c_minus, self.a)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, self.domain.dimension)
        z = np.asarray(self.marks, dtype=float).reshape(-1)
        if len(pos) != len(z):
            raise ParameterError("positions and marks differ in length")
        if np.any(np.abs(z) <= self.a):
            raise ParameterError("every atom mark must satisfy |z| > a")
        pos.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "marks", z)

    @property
    def kappa(self) -> float:
        return compensator(self.gamma, self.c_plus, self.c_minus, self.a)

    @property
    def count(self) -> int:
        return len(self.marks)

    # -- serialization -------------------------------------------------------
    def to_bytes(self) -> bytes:
        """Little-endian record: header {D, gamma, c_plus, a, count}, the atoms
        as count rows of (x_1..x_D, z), then the 2D box bounds."""
        D = self.domain.dimension
        head = _HEADER.pack(D, self.gamma, self.c_plus, self.a, self.count)
        body = np.column_stack([self.positions, self.marks]).astype("<f8").tobytes()
        box = np.array(self.domain.lower + self.domain.upper, dtype="<f8").tobytes()
        return head + body + box

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PointCloud":
        D, gamma, c_plus, a, count = _HEADER.unpack_from(buf, 0)
        off = _HEADER.size
        body = np.frombuffer(buf, dtype="<f8", count=count * (D + 1), offset=off)
        body = body.reshape(count, D + 1)
        off += 8 * count * (D + 1)
        if len(buf) >= off + 16 * D:
            box = np.frombuffer(buf, dtype="<f8", count=2 * D, offset=off)
            dom = DomainBox(tuple(box[:D]), tuple(box[D:]))
        else:
            dom = DomainBox.unit(D)
        return cls(dom, gamma, c_plus, 1.0 - c_plus, a, body[:, :D].copy(), body[:, D].copy())

    def write_csv(self, path) -> None:
        D = self.domain.dimension
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(D)] + ["z"])
            for p, z in zip(self.positions, self.marks):
                w.writerow([repr(float(v)) for v in p] + [repr(float(z))])


def _marks(n: int, lo: float, hi: float, gamma: float, c_plus: float, gen) -> np.ndarray:
    """|z| from the Levy measure restricted to (lo, hi] (hi may be inf)."""
    u = gen.random(n)
    top = 0.0 if np.isinf(hi) else hi ** -gamma
    mag = (lo ** -gamma - u * (lo ** -gamma - top)) ** (-1.0 / gamma)
    if c_plus < 1.0:
        neg = gen.random(n) >= c_plus
        mag = np.where(neg, -mag, mag)
    return mag


def sample_cloud(domain: DomainBox, gamma: float, c_plus: float, c_minus: float, a: float,
                 seed: int, key: tuple = ()) -> PointCloud:
    """Sample zeta^(a) on ``domain`` from stream ``(seed, CLOUD, *key)``."""
    _check_noise(gamma, c_plus, c_minus, a)
    mean = domain.volume * a ** -gamma
    if mean > MAX_EXPECTED_ATOMS:
        raise CapacityError(f"expected atom count {mean:.3g} exceeds budget {MAX_EXPECTED_ATOMS:.3g}")
    gen = _rng.stream(seed, _rng.CLOUD, *key)
    n = int(gen.poisson(mean))
    pos = domain.uniform(n, gen)
    # inverse transform: |z| = a U^{-1/gamma}
    u = 1.0 - gen.random(n)
    mag = a * u ** (-1.0 / gamma)
    if c_plus < 1.0:
        mag = np.where(gen.random(n) >= c_plus, -mag, mag)
    return PointCloud(domain, gamma, c_plus, c_minus, a, pos, mag)


def refine_cloud(cloud: PointCloud, a_prime: float, seed: int, key: tuple = ()) -> PointCloud:
    """Add the annulus atoms a' < |z| <= a, coupling both levels on one realization."""
    if not (0.0 < a_prime <= cloud.a):
        raise ParameterError("refinement requires 0 < a_prime <= cloud.a")
    if a_prime == cloud.a:
        return cloud
    g = cloud.gamma
    mean = cloud.domain.volume * (a_prime ** -g - cloud.a ** -g)
    if mean + cloud.count > MAX_EXPECTED_ATOMS:
        raise CapacityError(f"refined cloud would hold about {mean + cloud.count:.3g} atoms")
    gen = _rng.stream(seed, _rng.REFINE, *key)
    n = int(gen.poisson(mean))
    pos = cloud.domain.uniform(n, gen)
    z = _marks(n, a_prime, cloud.a, g, cloud.c_plus, gen)
    # rounding at the annulus edge must not violate |z| > a'
    z = np.where(np.abs(z) <= a_prime, np.sign(z) * np.nextafter(a_prime, np.inf), z)
    return PointCloud(cloud.domain, g, cloud.c_plus, cloud.c_minus, a_prime,
                      np.vstack([cloud.positions, pos]), np.concatenate([cloud.marks, z]))


_MASS_TAG = 0x6D617373
_MASS_BLOCK_ATOMS = 1 << 22


def mass_samples(volume: float, gamma: float, c_plus_values, a: float, n_clouds: int,
                 seed: int, key: tuple = ()) -> np.ndarray:
    """Samples of <zeta^(a), 1_Omega> for many independent clouds, without positions.

    Pairing with a constant only needs the mark sum, so positions are never
    drawn. Magnitudes are shared by all entries of ``c_plus_values`` (rows of
    the result); signs come from packed random bits when every c_plus is in
    {0, 1/2, 1} and from uniforms otherwise. Clouds are processed in blocks,
    block b drawing from stream ``(seed, CLOUD, *key, tag, b)``.

    Returns
    -------
    ndarray, shape (len(c_plus_values), n_clouds)
    """
    cps = np.atleast_1d(np.asarray(c_plus_values, dtype=float))
    for cp in cps:
        _check_noise(gamma, cp, 1.0 - cp, a)
    mean = float(volume) * a ** -gamma
    if mean > MAX_EXPECTED_ATOMS:
        raise CapacityError(f"expected atom count {mean:.3g} exceeds budget {MAX_EXPECTED_ATOMS:.3g}")
    n_clouds = int(n_clouds)
    bits_ok = bool(np.all(np.isin(cps, (0.0, 0.5, 1.0))))
    per_block = max(1, int(_MASS_BLOCK_ATOMS // max(mean, 1.0)))
    out = np.empty((cps.size, n_clouds))
    ig = -1.0 / gamma
    for b, start in enumerate(range(0, n_clouds, per_block)):
        gen = _rng.stream(seed, _rng.CLOUD, *key, _MASS_TAG, b)
        nb = min(per_block, n_clouds - start)
        counts = gen.poisson(mean, nb)
        tot = int(counts.sum())
        mag = gen.random(tot)
        np.subtract(1.0, mag, out=mag)
        np.power(mag, ig, out=mag)
        if bits_ok:
            pos = np.unpackbits(np.frombuffer(gen.bytes((tot + 7) // 8), dtype=np.uint8))[:tot]
        else:
            v = gen.random(tot)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        idx = np.minimum(starts, max(tot - 1, 0))

        def sums(z):
            s = np.add.reduceat(z, idx) if tot else np.zeros(nb)
            s[counts == 0] = 0.0
            return a * s

        total = sums(mag)
        half = sums(mag * pos) if bits_ok and np.any(cps == 0.5) else None
        for r, cp in enumerate(cps):
            if cp == 1.0:
                s = total
            elif cp == 0.0:
                s = -total
            elif bits_ok:
                s = 2.0 * half - total
            else:
                s = 2.0 * sums(mag * (v < cp)) - total
            out[r, start:start + nb] = s - compensator(gamma, cp, 1.0 - cp, a) * volume
    return out


def box_integral(f, domain: DomainBox, nodes: int = 48) -> float:
    """Lebesgue integral of a vectorized f over the box.

    Adaptive quadrature in one dimension, tensor Gauss-Legendre otherwise.
    """
    if domain.dimension == 1:
        lo, hi = domain.lower[0], domain.upper[0]
        val, err = integrate.quad(lambda x: float(np.asarray(f(np.array([[x]]))).reshape(-1)[0]),
                                  lo, hi, limit=200)
        if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise NumericalError(f"quadrature of test function failed: value {val}, error {err}")
        return float(val)
    x, w = np.polynomial.legendre.leggauss(nodes)
    grids, weights = [], []
    for lo, hi in zip(domain.lower, domain.upper):
        grids.append(0.5 * (hi - lo) * (x + 1) + lo)
        weights.append(0.5 * (hi - lo) * w)
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, domain.dimension)
    wt = np.ones(1)
    for wi in weights:
        wt = np.multiply.outer(wt, wi)
    return float(np.sum(np.asarray(f(mesh)).reshape(-1) * wt.reshape(-1)))


def pair_with_test_function(cloud: PointCloud, f, f_integral: float | None = None) -> float:
    """<zeta^(a), f> = sum_atoms z f(x) - kappa(a) int_Omega f."""
    if f_integral is None:
        f_integral = box_integral(f, cloud.domain)
    vals = np.asarray(f(cloud.positions), dtype=float).reshape(-1) if cloud.count else np.zeros(0)
    return float(np.dot(cloud.marks, vals) - cloud.kappa * f_integral)


def _small_jump_integrals(u: float, a: float, g: float) -> tuple:
    """int_0^a (cos(uz) - 1) g z^{-1-g} dz and int_0^a (sin(uz) - uz) g z^{-1-g} dz.

    Term-wise integrated Taylor series on (0, b] with b = min(a, 1/|u|), where
    it converges fast without cancellation, and adaptive quadrature on (b, a].
    """
    b = a if abs(u) * a <= 1.0 else 1.0 / abs(u)
    k = np.arange(1, 40)
    lf2 = special.gammaln(2 * k + 1)
    lf3 = special.gammaln(2 * k + 2)
    sgn = (-1.0) ** k
    re = g * np.sum(sgn * np.exp(2 * k * np.log(abs(u) * b + 1e-300) - lf2) * b ** -g / (2 * k - g))
    im = g * np.sum(sgn * np.exp((2 * k + 1) * np.log(abs(u) * b + 1e-300) - lf3) * b ** -g / (2 * k + 1 - g))
    im *= np.sign(u)
    if b < a:
        r2, e1 = integrate.quad(lambda z: (np.cos(u * z) - 1.0) * g * z ** (-1.0 - g), b, a, limit=400)
        i2, e2 = integrate.quad(lambda z: (np.sin(u * z) - u * z) * g * z ** (-1.0 - g), b, a, limit=400)
        if max(e1, e2) > 1e-9 * max(1.0, abs(r2), abs(i2)):
            raise NumericalError(f"small-jump quadrature failed at u={u}")
        re, im = re + r2, im + i2
    return float(re), float(im)


def levy_exponent(u, gamma: float, c_plus: float, c_minus: float, a: float = 0.0) -> np.ndarray:
    """int_{|z|>a} (e^{iuz} - 1 - iuz) lambda(dz).

    The untruncated exponent has the closed form
    gamma Gamma(-gamma) (c_plus (-iu)**gamma + c_minus (iu)**gamma); the part
    with |z| <= a is removed by adaptive quadrature.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    g = gamma
    base = g * special.gamma(-g) * (c_plus * (-1j * u) ** g + c_minus * (1j * u) ** g)
    if a <= 0:
        return base
    out = np.empty_like(base)
    for i, ui in enumerate(u):
        re, im = _small_jump_integrals(ui, a, g)
        out[i] = base[i] - (re + 1j * (c_plus - c_minus) * im)
    return out


def characteristic_functional(f, theta, domain: DomainBox, gamma: float, c_plus: float,
                              c_minus: float, a: float = 0.0):
    """E exp(i theta <zeta, f>) = exp(int_Omega psi(theta f(x)) dx).

    ``a = 0`` gives the limit noise; ``a > 0`` the truncated noise zeta^(a).
    ``f`` may be a float (constant function) or a vectorized callable.
    """
    _check_noise(gamma, c_plus, c_minus, a if a > 0 else 1.0)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.isscalar(f) or isinstance(f, (int, float)):
        expo = levy_exponent(theta * float(f), gamma, c_plus, c_minus, a) * domain.volume
    else:
        expo = np.array([
            box_integral(lambda x, t=t: levy_exponent(t * np.asarray(f(x)).reshape(-1), gamma,
                                                      c_plus, c_minus, a).real, domain)
            + 1j * box_integral(lambda x, t=t: levy_exponent(t * np.asarray(f(x)).reshape(-1), gamma,
                                                             c_plus, c_minus, a).imag, domain)
            for t in theta])
    out = np.exp(expo)
    if not np.all(np.isfinite(out)):
        raise NumericalError("characteristic functional is not finite")
    return out if out.size > 1 else complex(out[0])
