"""Heavy-tailed disorder laws in the domain of attraction of a gamma-stable law.

Two concrete laws with pure power tails are provided.

``one_sided_gibbs``
    omega = X - E[X] with X ~ Pareto(shape gamma, scale s = gamma - 1), so
    that omega > -1 almost surely, E[omega] = 0 and
    P[omega > t] = (s / (t + gamma))**gamma for t >= -1.
``two_sided``
    Sign + with probability c_plus, magnitude Pareto(gamma, 1), then centred
    by the analytic mean (c_plus - c_minus) * gamma / (gamma - 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import rng as _rng
from .errors import ParameterError

SUPPORT_MODES = ("one_sided_gibbs", "two_sided")


@dataclass(frozen=True)
class TailLaw:
    """Concrete centred law with P[|omega| > t] ~ C t**-gamma.

    Parameters
    ----------
    gamma : float
        Tail index in (1, 2).
    c_plus, c_minus : float
        Tail balance, non-negative with c_plus + c_minus = 1. The one-sided
        law has a bounded left tail, so it requires c_minus = 0.
    support_mode : {"one_sided_gibbs", "two_sided"}
    """

    gamma: float
    c_plus: float = 1.0
    c_minus: float = 0.0
    support_mode: str = "one_sided_gibbs"

    def __post_init__(self):
        g = float(self.gamma)
        if not (1.0 < g < 2.0):
            raise ParameterError(f"gamma must lie in (1, 2), got {self.gamma}")
        if self.support_mode not in SUPPORT_MODES:
            raise ParameterError(f"unknown support_mode {self.support_mode!r}")
        if self.c_plus < 0 or self.c_minus < 0 or abs(self.c_plus + self.c_minus - 1.0) > 1e-12:
            raise ParameterError("c_plus and c_minus must be non-negative and sum to 1")
        if self.support_mode == "one_sided_gibbs" and self.c_minus != 0.0:
            raise ParameterError("one_sided_gibbs has a bounded left tail; c_minus must be 0")

    # -- constants ---------------------------------------------------------
    @property
    def one_sided(self) -> bool:
        return self.support_mode == "one_sided_gibbs"

    @property
    def scale(self) -> float:
        """Pareto scale of the magnitude."""
        return self.gamma - 1.0 if self.one_sided else 1.0

    @property
    def mean_shift(self) -> float:
        """Analytic mean m of the uncentred variable."""
        g = self.gamma
        if self.one_sided:
            return g
        return (self.c_plus - self.c_minus) * g / (g - 1.0)

    @property
    def tail_constant(self) -> float:
        """C0 in P[omega > t] ~ C0 t**-gamma."""
        if self.one_sided:
            return self.scale ** self.gamma
        return self.c_plus

    @property
    def abs_tail_constant(self) -> float:
        """Constant in P[|omega| > t] ~ C t**-gamma."""
        return self.scale ** self.gamma if self.one_sided else 1.0

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "c_plus": self.c_plus, "c_minus": self.c_minus,
                "support_mode": self.support_mode}

    @classmethod
    def from_dict(cls, d: dict) -> "TailLaw":
        return cls(gamma=float(d["gamma"]), c_plus=float(d.get("c_plus", 1.0)),
                   c_minus=float(d.get("c_minus", 0.0)),
                   support_mode=d.get("support_mode", "one_sided_gibbs"))

    # -- distribution functions -------------------------------------------
    def sf(self, t):
        """P[omega > t]."""
        y = np.asarray(t, dtype=float) + self.mean_shift
        g = self.gamma
        if self.one_sided:
            s = self.scale
            with np.errstate(divide="ignore"):
                out = np.where(y > s, (s / np.maximum(y, s)) ** g, 1.0)
            return out[()] if out.ndim == 0 else out
        cp, cm = self.c_plus, self.c_minus
        ay = np.maximum(np.abs(y), 1.0)
        out = np.where(y >= 1.0, cp * ay ** -g, np.where(y > -1.0, cp, 1.0 - cm * ay ** -g))
        return out[()] if out.ndim == 0 else out

    def cdf(self, t):
        """P[omega <= t], with the left tail evaluated directly (no 1 - sf cancellation)."""
        if self.one_sided:
            return 1.0 - self.sf(t)
        y = np.asarray(t, dtype=float) + self.mean_shift
        cp, cm, g = self.c_plus, self.c_minus, self.gamma
        ay = np.maximum(np.abs(y), 1.0)
        out = np.where(y <= -1.0, cm * ay ** -g, np.where(y < 1.0, cm, 1.0 - cp * ay ** -g))
        return out[()] if out.ndim == 0 else out

    def pdf(self, t):
        y = np.asarray(t, dtype=float) + self.mean_shift
        g = self.gamma
        if self.one_sided:
            s = self.scale
            out = np.where(y > s, g * s ** g * np.maximum(y, s) ** (-g - 1.0), 0.0)
        else:
            ay = np.maximum(np.abs(y), 1.0)
            w = np.where(y > 0, self.c_plus, self.c_minus)
            out = np.where(np.abs(y) >= 1.0, w * g * ay ** (-g - 1.0), 0.0)
        return out[()] if out.ndim == 0 else out

    def abs_sf(self, t):
        """P[|omega| > t] for t >= 0 (1 for t < 0)."""
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)
        out = np.where(t < 0, 1.0, self.sf(tt) + self.cdf(-tt))
        return out[()] if out.ndim == 0 else out

    def abs_pdf(self, t):
        """Density of |omega| on (0, inf)."""
        t = np.asarray(t, dtype=float)
        out = np.where(t > 0, self.pdf(t) + self.pdf(-t), 0.0)
        return out[()] if out.ndim == 0 else out

    # -- sampling ------------------------------------------------------------
    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Draw i.i.d. values with the given generator.

        One uniform is consumed per value (the sign of a two-sided draw is
        split off the same uniform), so a shorter draw is always a prefix of
        a longer one from the same stream.
        """
        g = self.gamma
        u = 1.0 - rng.random(size)  # in (0, 1]
        if self.one_sided:
            return self.scale * u ** (-1.0 / g) - g
        cp = self.c_plus
        if self.c_minus > 0.0 and cp > 0.0:
            pos = u <= cp
            with np.errstate(over="ignore", divide="ignore"):  # unselected branch only
                v = np.where(pos, u / cp, (u - cp) / (1.0 - cp))
            mag = v ** (-1.0 / g)
            return np.where(pos, mag, -mag) - self.mean_shift
        mag = u ** (-1.0 / g)
        return (mag if cp > 0.0 else -mag) - self.mean_shift


def sample_disorder(law: TailLaw, n_sites: int, seed: int, key: tuple = ()) -> np.ndarray:
    """I.i.d. disorder values on ``n_sites`` sites from stream ``(seed, DISORDER, *key)``."""
    if int(n_sites) < 1:
        raise ParameterError("n_sites must be >= 1")
    return law.sample(int(n_sites), _rng.stream(seed, _rng.DISORDER, *key))


def solve_noise_scale(law: TailLaw, v_delta: float) -> float:
    """Exact quantile V with P[|omega| > V] = v_delta.

    The one-sided law is inverted in closed form whenever the solution lies in
    the pure power region V >= 1; otherwise the tail is inverted by Brent's
    method on a log scale.
    """
    v = float(v_delta)
    if not (0.0 < v < 1.0):
        raise ParameterError(f"v_delta must lie in (0, 1), got {v_delta}")
    g = law.gamma
    if law.one_sided and v <= float(law.abs_sf(1.0)):
        return law.scale * v ** (-1.0 / g) - g

    def f(x):
        return np.log(law.abs_sf(x)) - np.log(v)

    hi = max(2.0, 2.0 * (law.abs_tail_constant / v) ** (1.0 / g) + abs(law.mean_shift))
    while f(hi) > 0:
        hi *= 2.0
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


@dataclass(frozen=True)
class NoiseScales:
    """Scales tying a lattice to the noise: v, V, J and the effective coupling."""

    v_delta: float
    V_delta: float
    J_delta: float
    beta_hat_delta: float

    @classmethod
    def from_beta(cls, law: TailLaw, v_delta: float, J_delta: float, beta: float) -> "NoiseScales":
        V = solve_noise_scale(law, v_delta)
        return cls(v_delta, V, float(J_delta), float(beta) * V / float(J_delta))

    @classmethod
    def from_beta_hat(cls, law: TailLaw, v_delta: float, J_delta: float, beta_hat: float) -> "NoiseScales":
        V = solve_noise_scale(law, v_delta)
        return cls(v_delta, V, float(J_delta), float(beta_hat))

    @property
    def beta(self) -> float:
        return self.beta_hat_delta * self.J_delta / self.V_delta


def truncated_moment_asymptotic(law: TailLaw, exponent: float, a: float, v_delta: float,
                                V_delta: float | None = None) -> float:
    """Regular-variation asymptotic of the truncated moment at level a * V."""
    g, p = law.gamma, float(exponent)
    V = solve_noise_scale(law, v_delta) if V_delta is None else V_delta
    if p < g:
        return g / (g - p) * a ** (p - g) * V ** p * v_delta
    return g / (p - g) * a ** (p - g) * V ** p * v_delta


def truncated_moment_ratio(law: TailLaw, exponent: float, a: float, v_delta: float,
                           n_samples: int = 10**8, seed: int = 0, chunk: int = 1 << 22) -> float:
    """Monte Carlo truncated moment divided by its regular-variation asymptotic.

    For ``exponent = p < gamma`` the big-jump moment E[|omega|^p; |omega| > aV]
    is estimated. Plain sampling has infinite variance there (2p > gamma is
    allowed), so the estimate uses importance sampling from a Pareto proposal
    on (aV, inf) of index (gamma - p) / 2, which makes the weights bounded.
    For ``exponent = q > gamma`` the small-jump moment E[|omega|^q; |omega| <= aV]
    has finite variance and is estimated by plain sampling from the law.
    """
    g, p = law.gamma, float(exponent)
    if p == g:
        raise ParameterError("exponent equal to gamma: both asymptotic formulas are singular")
    if not (0.0 < p <= 2.0):
        raise ParameterError("exponent must lie in (0, 2]")
    if a <= 0:
        raise ParameterError("a must be positive")
    V = solve_noise_scale(law, v_delta)
    x = a * V
    gen = _rng.stream(seed, _rng.MC)
    total, done = 0.0, 0
    n_samples = int(n_samples)
    while done < n_samples:
        m = min(chunk, n_samples - done)
        if p < g:
            eta = 0.5 * (g - p)
            t = x * (1.0 - gen.random(m)) ** (-1.0 / eta)
            w = t ** (p + eta + 1.0) * law.abs_pdf(t) / (eta * x ** eta)
            total += w.sum()
        else:
            w = np.abs(law.sample(m, gen))
            total += np.sum(np.where(w <= x, w ** p, 0.0))
        done += m
    return (total / n_samples) / truncated_moment_asymptotic(law, p, a, v_delta, V)
