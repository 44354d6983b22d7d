"""Discrete and continuum polynomial chaos.

A chaos of order k pairs a symmetric kernel psi^(k), vanishing on diagonals,
with k copies of a noise:

    X_k = (1/k!) sum_{x_1..x_k} psi^(k)(x) prod_j omega_{x_j} / V   (discrete)
    X_k = (1/k!) int psi^(k)(x) prod_j zeta^(a)(dx_j)                (continuum)

For product-form kernels on a time-ordered sector the sum over ordered tuples
is a sequential dynamic program; generic kernels are enumerated (oracle).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, signal, special

from . import rng as _rng
from .errors import CapacityError, NumericalError, ParameterError

# enumeration oracle budget: sorted tuples per order (40^3)
ENUM_BUDGET = 40 ** 3


@dataclass
class ChaosResult:
    """Per-order contributions (already weighted by beta_hat^k) and their sum."""

    per_order: np.ndarray
    truncation: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.per_order = np.asarray(self.per_order, dtype=float)

    @property
    def total(self):
        return self.per_order.sum(axis=-1)

    def to_json(self) -> str:
        return json.dumps({"per_order": self.per_order.tolist(), "total": np.asarray(self.total).tolist(),
                           "M": self.truncation, "metadata": self.metadata})


@dataclass(frozen=True)
class Lattice:
    """Sites of a discretization with cell volume v and noise scales V, J.

    ``points`` has shape (n, D); coordinate ``time_axis`` orders product kernels.
    """

    points: np.ndarray
    cell_volume: float
    V_delta: float = 1.0
    J_delta: float = 1.0
    time_axis: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if self.cell_volume <= 0:
            raise ParameterError("cell volume must be positive")

    @property
    def n_sites(self) -> int:
        return len(self.points)

    @property
    def volume(self) -> float:
        return self.n_sites * self.cell_volume

    @classmethod
    def regular(cls, lower, upper, shape, **kw) -> "Lattice":
        """Cell centres of a uniform grid on the box [lower, upper]."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        axes = [lo + (np.arange(s) + 0.5) * (hi - lo) / s for lo, hi, s in zip(lower, upper, shape)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
        vol = float(np.prod((upper - lower) / np.array(shape)))
        return cls(pts, vol, **kw)


@dataclass(frozen=True)
class ProductKernel:
    """Markov product-form kernel on the time-ordered sector.

    psi^(k)(x_1..x_k) = normalizer^{-1} prod_j step(x_{j-1}, x_j) terminal(x_k)
    for strictly increasing times, x_0 = origin, symmetrized elsewhere and
    zero when two times coincide. ``step`` and ``terminal`` are vectorized
    over leading axes of point arrays with last axis D. ``stationary`` marks
    kernels whose step depends on the increment only.
    """

    step_weight: Callable
    terminal_weight: Callable
    normalizer: float = 1.0
    time_axis: int = 0
    origin: tuple | None = None
    stationary: bool = False

    def _origin(self, D: int) -> np.ndarray:
        return np.zeros(D) if self.origin is None else np.asarray(self.origin, dtype=float)

    def __call__(self, points) -> float:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        D = pts.shape[1]
        o = self._origin(D)
        if len(pts) == 0:
            return float(self.terminal_weight(o[None, :])[0] / self.normalizer)
        pts = pts[np.argsort(pts[:, self.time_axis], kind="stable")]
        t = np.concatenate([[o[self.time_axis]], pts[:, self.time_axis]])
        if np.any(np.diff(t) <= 0):
            return 0.0
        prev = np.vstack([o[None, :], pts[:-1]])
        val = np.prod(self.step_weight(prev, pts)) * self.terminal_weight(pts[-1:])[0]
        return float(val / self.normalizer)

    def spec(self, k: int) -> "SymmetricKernelSpec":
        return SymmetricKernelSpec(k, self, "markov_product", self)

    def specs(self, M: int) -> list:
        return [self.spec(k) for k in range(M + 1)]

    def matrices(self, points: np.ndarray):
        """Origin weights w0 (n,), step matrix W (n, n) and terminal weights (n,)."""
        pts = np.asarray(points, dtype=float)
        D = pts.shape[1]
        o = self._origin(D)
        ta = self.time_axis
        w0 = np.where(pts[:, ta] > o[ta], self.step_weight(np.broadcast_to(o, pts.shape), pts), 0.0)
        W = np.where(pts[:, None, ta] < pts[None, :, ta],
                     self.step_weight(pts[:, None, :], pts[None, :, :]), 0.0)
        term = self.terminal_weight(pts)
        return np.asarray(w0, float), np.asarray(W, float), np.asarray(term, float)


@dataclass(frozen=True)
class SymmetricKernelSpec:
    """Order-k kernel: ``evaluator`` maps a (k, D) array of points to a real."""

    order: int
    evaluator: Callable
    form: str = "generic"
    product: ProductKernel | None = None

    def __call__(self, points) -> float:
        return float(self.evaluator(np.atleast_2d(points)))


def _as_specs(kernels, max_order):
    if isinstance(kernels, ProductKernel):
        return kernels, None
    specs = list(kernels)
    prods = {id(s.product) for s in specs}
    if specs and all(s.form == "markov_product" and s.product is not None for s in specs) and len(prods) == 1:
        return specs[0].product, specs
    return None, specs


def _uniform_1d(points: np.ndarray, time_axis: int):
    if points.shape[1] != 1:
        return None
    t = points[:, 0]
    if len(t) < 3:
        return None
    d = np.diff(t)
    if np.all(d > 0) and np.allclose(d, d[0], rtol=1e-12, atol=0):
        return float(d[0])
    return None


def _markov_orders(kern: ProductKernel, points: np.ndarray, m: np.ndarray, M: int,
                   power: float = 1.0) -> np.ndarray:
    """sum over time-ordered k-tuples of psi^power * prod m, for k = 0..M.

    ``m`` has shape (R, n). Uses an FFT causal convolution when the kernel is
    stationary on a uniform 1D grid, a dense step matrix otherwise.
    """
    R, n = m.shape
    D = points.shape[1]
    o = kern._origin(D)
    term0 = kern.terminal_weight(o[None, :])[0]
    out = np.zeros((R, M + 1))
    out[:, 0] = (term0 / kern.normalizer) ** power
    if M == 0 or n == 0:
        return out
    order = np.argsort(points[:, kern.time_axis], kind="stable")
    pts = points[order]
    mm = m[:, order]
    h = _uniform_1d(pts, kern.time_axis) if kern.stationary else None
    if h is not None:
        w0 = np.where(pts[:, 0] > o[0], kern.step_weight(np.broadcast_to(o, pts.shape), pts), 0.0) ** power
        c = np.zeros(n)
        diffs = np.arange(1, n)[:, None] * h
        c[1:] = kern.step_weight(np.zeros((n - 1, 1)), diffs) ** power
        term = kern.terminal_weight(pts) ** power
        F = w0[None, :] * mm
        out[:, 1] = F @ term
        T = None
        if n <= 2048:
            # exact Toeplitz product; FFT convolution only for large grids
            lag = np.arange(n)[None, :] - np.arange(n)[:, None]
            T = np.where(lag > 0, c[np.clip(lag, 0, n - 1)], 0.0)
        for k in range(2, M + 1):
            G = F @ T if T is not None else signal.fftconvolve(F, c[None, :], axes=1)[:, :n]
            F = G * mm
            out[:, k] = F @ term
    else:
        w0, W, term = kern.matrices(pts)
        w0, W, term = w0 ** power, W ** power, term ** power
        F = w0[None, :] * mm
        out[:, 1] = F @ term
        for k in range(2, M + 1):
            F = (F @ W) * mm
            out[:, k] = F @ term
    out[:, 1:] /= kern.normalizer ** power
    return out


def _enumerate_orders(specs: Sequence[SymmetricKernelSpec], points: np.ndarray, m: np.ndarray,
                      budget: int = ENUM_BUDGET) -> np.ndarray:
    """Oracle: sum over sorted k-subsets (equivalently (1/k!) sum over tuples)."""
    R, n = m.shape
    out = np.zeros((R, max(s.order for s in specs) + 1))
    for spec in specs:
        k = spec.order
        if k == 0:
            out[:, 0] = spec.evaluator(points[:0])
            continue
        if k > n:
            continue
        if math.comb(n, k) > budget:
            raise CapacityError(f"enumeration of order {k} over {n} sites exceeds the budget of {budget} tuples")
        acc = np.zeros(R)
        for comb in itertools.combinations(range(n), k):
            c = list(comb)
            val = spec.evaluator(points[c])
            if val != 0.0:
                acc += val * np.prod(m[:, c], axis=1)
        out[:, k] = acc
    return out


def discrete_chaos(kernels, lattice: Lattice, disorder, beta_hat: float,
                   max_order: int | None = None, method: str = "auto") -> ChaosResult:
    """per_order[k] = (beta_hat^k / k!) sum_x psi^(k)(x) prod omega_{x_j} / V.

    Parameters
    ----------
    kernels : ProductKernel or sequence of SymmetricKernelSpec (orders 0..M)
    disorder : array, shape (n,) or (R, n) for R replicas
    method : {"auto", "markov", "enumerate"}
    """
    om = np.asarray(disorder, dtype=float)
    single = om.ndim == 1
    m = np.atleast_2d(om) / lattice.V_delta
    if m.shape[1] != lattice.n_sites:
        raise ParameterError("disorder length must equal the number of lattice sites")
    prod, specs = _as_specs(kernels, max_order)
    if specs is not None and max_order is None:
        max_order = len(specs) - 1
    if max_order is None:
        max_order = lattice.n_sites
    M = int(max_order)
    if method == "enumerate" or (prod is None and method == "auto"):
        if specs is None:
            specs = prod.specs(M)
        X = _enumerate_orders(specs[: M + 1], lattice.points, m)
        path = "enumerate"
    elif method in ("auto", "markov"):
        if prod is None:
            raise ParameterError("markov path requires a product-form kernel")
        X = _markov_orders(prod, lattice.points, m, M)
        path = "markov"
    else:
        raise ParameterError(f"unknown method {method!r}")
    X = X * beta_hat ** np.arange(X.shape[1])
    if not np.all(np.isfinite(X)):
        raise NumericalError("non-finite chaos terms")
    return ChaosResult(X[0] if single else X, M, {"method": path})


# -- continuum chaos --------------------------------------------------------------

def mesh_projection(cloud, mesh: int):
    """Lattice of cell centres and projected masses zeta^(a)(cell)."""
    dom = cloud.domain
    shape = (int(mesh),) * dom.dimension
    lat = Lattice.regular(dom.lower, dom.upper, shape)
    lo = np.array(dom.lower)
    hi = np.array(dom.upper)
    idx = np.floor((cloud.positions - lo) / (hi - lo) * mesh).astype(int)
    idx = np.clip(idx, 0, mesh - 1)
    flat = np.ravel_multi_index(idx.T, shape) if cloud.count else np.zeros(0, dtype=int)
    masses = np.bincount(flat, weights=cloud.marks, minlength=lat.n_sites).astype(float)
    masses -= cloud.kappa * lat.cell_volume
    return lat, masses


def _quad1(f, lo, hi, points=None):
    val, err = integrate.quad(f, lo, hi, points=points, limit=200, epsabs=1e-11, epsrel=1e-9)
    if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise NumericalError(f"quadrature failed: value {val}, error estimate {err}")
    return val


def _exact_continuum(specs, cloud, beta_hat) -> np.ndarray:
    """Multilinear expansion for k <= 2 on a one-dimensional domain."""
    if cloud.domain.dimension != 1:
        raise CapacityError("exact continuum path is implemented for one-dimensional domains")
    lo, hi = cloud.domain.lower[0], cloud.domain.upper[0]
    x = cloud.positions[:, 0]
    z = cloud.marks
    kap = cloud.kappa
    out = np.zeros(len(specs))
    for spec in specs:
        k = spec.order
        if k == 0:
            out[0] = spec.evaluator(np.zeros((0, 1)))
        elif k == 1:
            f = lambda s: spec.evaluator(np.array([[s]]))
            atoms = sum(zi * f(xi) for xi, zi in zip(x, z))
            out[1] = atoms - kap * _quad1(f, lo, hi)
        elif k == 2:
            f = lambda s, t: spec.evaluator(np.array([[s], [t]]))
            # (1/2) sum_{i != j}: symmetric, so the sum over i < j
            aa = sum(z[i] * z[j] * f(x[i], x[j]) for i in range(len(x)) for j in range(i + 1, len(x)))
            al = sum(zi * _quad1(lambda t: f(xi, t), lo, hi, points=[xi]) for xi, zi in zip(x, z))
            # t = s + (hi - s) v^2 tames the diagonal singularity of the inner integral
            ll = _quad1(lambda s: _quad1(lambda v: 2.0 * v * (hi - s) * f(s, s + (hi - s) * v * v), 0.0, 1.0),
                        lo, hi)
            out[2] = aa - kap * al + kap ** 2 * ll
        else:
            raise CapacityError("exact continuum path supports orders k <= 2 only")
    return out * beta_hat ** np.arange(len(specs))


def continuum_chaos(kernels, cloud, beta_hat: float, mesh: int = 256, max_order: int | None = None,
                    method: str = "mesh") -> ChaosResult:
    """Truncated continuum chaos Phi^(a) on a point cloud.

    ``method="mesh"`` projects zeta^(a) on a uniform mesh and reuses the
    discrete dynamic program; ``method="exact"`` expands by multilinearity
    (orders <= 2, one-dimensional domain, adaptive quadrature).
    """
    prod, specs = _as_specs(kernels, max_order)
    if max_order is None:
        max_order = len(specs) - 1 if specs is not None else 2
    if method == "exact":
        if specs is None:
            specs = prod.specs(int(max_order))
        X = _exact_continuum(specs[: int(max_order) + 1], cloud, beta_hat)
        return ChaosResult(X, int(max_order), {"method": "exact", "a": cloud.a})
    if method != "mesh":
        raise ParameterError(f"unknown method {method!r}")
    if mesh < 64 and cloud.domain.dimension == 1:
        raise ParameterError("mesh surrogate requires at least 64 cells per axis")
    lat, masses = mesh_projection(cloud, mesh)
    res = discrete_chaos(prod if prod is not None else specs, lat, masses, beta_hat, int(max_order))
    res.metadata.update({"mesh": int(mesh), "a": cloud.a})
    return res


# -- norms and constants -------------------------------------------------------------

@dataclass(frozen=True)
class SymNorm:
    q: float
    value: float


def symmetric_norm(kernel, lattice: Lattice, q: float, order: int | None = None) -> SymNorm:
    """((v^k / k!) sum_{x in lattice^k} |psi^(k)(x)|^q)^{1/q}.

    For a diagonal-vanishing symmetric kernel the 1/k! sum equals the sum over
    time-ordered tuples, evaluated by dynamic programming for product kernels
    and by enumeration otherwise.
    """
    if not (1.0 < q <= 2.0):
        raise ParameterError("q must lie in (1, 2]")
    if isinstance(kernel, ProductKernel):
        if order is None:
            raise ParameterError("order is required for a product kernel")
        k = int(order)
        ones = np.ones((1, lattice.n_sites))
        S = _markov_orders(kernel, lattice.points, ones, k, power=q)[0, k]
    else:
        k = kernel.order
        if kernel.form == "markov_product" and kernel.product is not None:
            ones = np.ones((1, lattice.n_sites))
            S = _markov_orders(kernel.product, lattice.points, ones, k, power=q)[0, k]
        else:
            absq = SymmetricKernelSpec(k, lambda p: abs(kernel.evaluator(p)) ** q)
            S = _enumerate_orders([absq], lattice.points, np.ones((1, lattice.n_sites)))[0, k]
    return SymNorm(q, float((lattice.cell_volume ** k * S) ** (1.0 / q)))


def simplex_integral(xi: float, k: int, t: float = 1.0) -> float:
    """int_{0<t_1<...<t_k<t} prod_{j=1}^{k+1} (t_j - t_{j-1})^{xi-1}, t_0 = 0, t_{k+1} = t.

    Closed form t^{(k+1)xi - 1} Gamma(xi)^{k+1} / Gamma((k+1)xi), via log-gamma.
    """
    if xi <= 0:
        raise ParameterError("xi must be positive (the integral diverges otherwise)")
    if k < 0 or t <= 0:
        raise ParameterError("k must be >= 0 and t > 0")
    n = k + 1
    return float(math.exp((n * xi - 1.0) * math.log(t) + n * special.gammaln(xi) - special.gammaln(n * xi)))


def moment_bound_constant(p: float, q: float, gamma: float, domain_volume: float, C1: float = 1.0) -> float:
    """C0 = C1/(p-1) max{(gamma-p)^{-1/p}, (q-gamma)^{-1/q}} (|Omega| v 1)^{1/p-1/q}."""
    if not (1.0 < p < gamma < q <= 2.0):
        raise ParameterError("moment bound requires 1 < p < gamma < q <= 2")
    if C1 <= 0:
        raise ParameterError("C1 must be positive")
    return C1 / (p - 1.0) * max((gamma - p) ** (-1.0 / p), (q - gamma) ** (-1.0 / q)) * \
        max(domain_volume, 1.0) ** (1.0 / p - 1.0 / q)


# calibrated geometric rates C_cal with r_k <= C_cal^k, per (p, q, gamma) family
MOMENT_CALIBRATION = {(1.2, 1.8, 1.5): 4.0}


@dataclass
class MomentBoundReport:
    orders: np.ndarray
    pnorms: np.ndarray
    pnorm_ci: np.ndarray
    qnorms: np.ndarray
    ratios: np.ndarray
    rate: float
    r2: float
    calibration: float | None
    within_calibration: bool | None
    warnings: list

    def to_dict(self) -> dict:
        return {"orders": self.orders.tolist(), "pnorms": self.pnorms.tolist(),
                "pnorm_ci": self.pnorm_ci.tolist(), "qnorms": self.qnorms.tolist(),
                "ratios": self.ratios.tolist(), "rate": self.rate, "r2": self.r2,
                "calibration": self.calibration, "within_calibration": self.within_calibration,
                "warnings": self.warnings}


def empirical_moment_bound_check(kernel: ProductKernel, law, lattice: Lattice, p: float, q: float,
                                 replicas: int, seed: int, max_order: int = 6, beta_hat: float = 1.0,
                                 chunk: int = 500) -> MomentBoundReport:
    """Per-order ratios r_k = ||X_k||_p / ||psi^(k)||_q over disorder replicas.

    X_k excludes the coupling beta_hat^k unless ``beta_hat`` is supplied; with
    beta_hat = 0 every X_k, k >= 1, vanishes.
    """
    from .stats import bootstrap_moment, log_linear_fit

    if not (1.0 < p < law.gamma < q <= 2.0):
        raise ParameterError("requires 1 < p < gamma < q <= 2")
    M = int(max_order)
    rows = []
    for start in range(0, replicas, chunk):
        ids = range(start, min(replicas, start + chunk))
        om = np.stack([law.sample(lattice.n_sites, _rng.stream(seed, _rng.DISORDER, r)) for r in ids])
        m = om / lattice.V_delta
        rows.append(_markov_orders(kernel, lattice.points, m, M) * beta_hat ** np.arange(M + 1))
    X = np.vstack(rows)
    ks = np.arange(1, M + 1)
    pn, ci, qn = [], [], []
    for k in ks:
        est, c = bootstrap_moment(X[:, k], p, B=400, seed=seed + k)
        pn.append(est)
        ci.append(c)
        qn.append(symmetric_norm(kernel, lattice, q, order=int(k)).value)
    pn, qn = np.array(pn), np.array(qn)
    r = pn / qn
    warnings = []
    if replicas < 1000:
        warnings.append("fewer than 1000 replicas: p-norm estimates of heavy-tailed chaos are unstable")
    if np.all(r > 0):
        slope, _, r2 = log_linear_fit(ks, r)
        rate = float(np.max(r ** (1.0 / ks)))
    else:
        slope, r2, rate = 0.0, float("nan"), 0.0
    cal = MOMENT_CALIBRATION.get((round(p, 6), round(q, 6), round(law.gamma, 6)))
    within = None if cal is None else bool(np.all(r <= cal ** ks))
    return MomentBoundReport(ks, pn, np.array(ci), qn, r, rate, r2, cal, within, warnings)
