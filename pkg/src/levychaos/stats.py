"""Statistical verification helpers: KS distances, bootstrap p-norms,
empirical characteristic functions and convergence reports.

Every numerical threshold used by the acceptance suite lives in ``THRESHOLDS``
so that tolerances are audited in one place.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as _rng
from .errors import ParameterError

THRESHOLDS = {
    # exact identities
    "chaos_identity_rel": 1e-9,
    "dp_enumeration_rel": 1e-10,
    "renewal_residual": 1e-12,
    "homogeneous_norm": 1e-10,
    # renewal and Mittag-Leffler limits
    "doney_rel": 0.10,
    "ml_Z_rel": 0.03,
    "ml_Zc_rel": 0.05,
    "ml_exp_abs": 1e-12,
    # Monte Carlo oracles
    "simplex_se": 3.0,
    "cf_sup": 0.02,
    "martingale_se": 5.0,
    "norm_spread": 2.0,
    "truncated_moment_rel": 0.05,
    "truncation_bound_se": 3.0,
    # convergence ladders
    "ks_band": 0.01,
    "ks_pinning_final": 0.05,
    "ks_polymer_final": 0.07,
    "pnorm_rel": 0.10,
    # relevance dichotomy
    "weak_mean_lo": 0.9,
    "weak_mean_hi": 1.1,
    "strong_median": 0.2,
    # local limit theorem
    "llt_sup": 0.05,
    # moment-bound shape
    "moment_r2": 0.9,
    "moment_resolution_spread": 2.0,
}

KS_C99 = 1.63


@dataclass
class SampleSet:
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ParameterError("sample set contains non-finite values")
        self.values = v
        self.metadata = dict(self.metadata)
        self.metadata.setdefault("n", len(v))

    def __len__(self):
        return len(self.values)


def _values(s) -> np.ndarray:
    v = s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float).reshape(-1)
    if v.size == 0:
        raise ParameterError("empty sample")
    return v


def ks_distance(s1, s2) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup_x |F1(x) - F2(x)|.

    Both samples are sorted and the empirical CDFs are compared at every
    pooled observation, which is exact (ties handled with right limits).
    """
    a = np.sort(_values(s1))
    b = np.sort(_values(s2))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_band(m: int, n: int, c: float = KS_C99) -> float:
    """Classical two-sample KS band c sqrt((m + n) / (m n))."""
    return c * np.sqrt((m + n) / (m * n))


def pnorm(values, p: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.mean(v ** p) ** (1.0 / p))


def bootstrap_moment(s, p: float, B: int = 1000, seed: int = 0, level: float = 0.95):
    """p-norm (E|X|^p)^{1/p} with a percentile bootstrap confidence interval.

    Returns
    -------
    estimate : float
    ci : tuple of float
    """
    if not (0.0 < p <= 2.0):
        raise ParameterError("p must lie in (0, 2]")
    if B < 200:
        raise ParameterError("at least 200 bootstrap resamples are required")
    x = np.abs(_values(s)) ** p
    est = float(np.mean(x) ** (1.0 / p))
    gen = _rng.stream(seed, _rng.BOOTSTRAP)
    n = x.size
    means = np.empty(B)
    for b in range(B):
        means[b] = x[gen.integers(0, n, n)].mean()
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2]) ** (1.0 / p)
    return est, (float(min(lo, est)), float(max(hi, est)))


def empirical_cf(s, theta_grid) -> np.ndarray:
    """(1/n) sum_j exp(i theta x_j) on each grid point."""
    x = _values(s)
    th = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    out = np.empty(th.size, dtype=complex)
    for i, t in enumerate(th):
        out[i] = np.mean(np.exp(1j * t * x))
    return out


def mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def log_linear_fit(k, r) -> tuple:
    """Least-squares fit log r = c + k log C; returns (slope, intercept, R^2)."""
    k = np.asarray(k, dtype=float)
    y = np.log(np.asarray(r, dtype=float))
    A = np.column_stack([k, np.ones_like(k)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    # a flat series (ss at rounding level) is fitted exactly by slope 0
    flat = ss <= 1e-24 * max(1.0, float(y @ y))
    r2 = 1.0 if flat else 1.0 - np.sum(resid ** 2) / ss
    return float(coef[0]), float(coef[1]), float(r2)


def non_increasing_within(seq, band: float) -> bool:
    """True when every later value exceeds no earlier value by more than ``band``."""
    seq = np.asarray(seq, dtype=float)
    return bool(all(seq[j] <= np.min(seq[: j + 1]) + band for j in range(len(seq))))


@dataclass
class ConvergenceRow:
    label: str
    ks: float
    mean: float
    pnorm: float
    pnorm_ci: tuple
    n: int


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)

    def add(self, label, sample, reference, p: float, B: int = 400, seed: int = 0) -> ConvergenceRow:
        est, ci = bootstrap_moment(sample, p, B, seed)
        row = ConvergenceRow(str(label), ks_distance(sample, reference), float(np.mean(_values(sample))),
                             est, ci, len(_values(sample)))
        self.rows.append(row)
        return row

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.ks for r in self.rows])

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "verdicts": self.verdicts,
                "reference": self.reference}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)

    def to_text(self) -> str:
        lines = [f"{'label':>10} {'KS':>8} {'mean':>10} {'p-norm':>10}  CI"]
        for r in self.rows:
            lines.append(f"{r.label:>10} {r.ks:8.4f} {r.mean:10.4f} {r.pnorm:10.4f}  "
                         f"[{r.pnorm_ci[0]:.4f}, {r.pnorm_ci[1]:.4f}]")
        for k, v in self.verdicts.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines)
