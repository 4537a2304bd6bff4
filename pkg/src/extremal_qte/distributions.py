"""Heavy-tailed laws used by the simulation study and by the test oracles.

Besides the four elementary laws (Student-t, Frechet, Pareto, uniform) this
module evaluates the population quantiles of the potential outcomes of the
three simulation models. Those are scale/shape mixtures over a uniform
covariate and have no closed-form quantile, so they are obtained by
integrating the conditional survival function over the covariate with
Gauss-Legendre quadrature and inverting with a bracketing root finder.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .errors import DomainError, ParameterError

__all__ = [
    "StudentT",
    "Frechet",
    "Pareto",
    "Uniform01",
    "TailLaw",
    "SimModel",
    "make_rng",
    "sample",
    "cdf",
    "true_quantile",
    "true_tail_quantile",
    "true_model_quantile",
    "true_model_tail_quantile",
    "model_survival",
]

QUADRATURE_NODES = 1024


def make_rng(seed, *stream):
    """Return a numpy Generator for ``seed``, optionally on a derived stream.

    ``make_rng(s, i)`` and ``make_rng(s, j)`` are statistically independent
    for ``i != j``; both are fully determined by their arguments.
    """
    if isinstance(seed, np.random.Generator):
        if stream:
            raise ParameterError("cannot derive a stream from an existing Generator")
        return seed
    if seed is None:
        raise ParameterError("an explicit seed is required")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def _check_positive(**params):
    for name, value in params.items():
        if not (np.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be a positive finite number, got {value!r}")


def _check_level(tau):
    if not (0.0 < tau < 1.0):
        raise DomainError(f"probability level must lie in (0, 1), got {tau!r}")


@dataclass(frozen=True)
class StudentT:
    df: float

    def __post_init__(self):
        _check_positive(df=self.df)

    def draw(self, rng, n):
        return rng.standard_t(self.df, size=n)

    def cdf(self, y):
        return stats.t.cdf(y, self.df)

    def sf(self, y):
        return stats.t.sf(y, self.df)

    def quantile(self, tau):
        q = float(stats.t.ppf(tau, self.df))
        # Newton polish on the CDF; ppf alone leaves ~1e-11 error for small df
        for _ in range(2):
            dens = stats.t.pdf(q, self.df)
            if dens <= 0:
                break
            lower = tau <= 0.5
            resid = stats.t.cdf(q, self.df) - tau if lower else (1.0 - tau) - stats.t.sf(q, self.df)
            q -= resid / dens
        return float(q)

    def tail_quantile(self, p):
        q = float(stats.t.isf(p, self.df))
        for _ in range(2):
            dens = stats.t.pdf(q, self.df)
            if dens <= 0:
                break
            q -= (p - stats.t.sf(q, self.df)) / dens
        return float(q)


@dataclass(frozen=True)
class Frechet:
    """Frechet law ``F(y) = exp(-(y/scale)**-shape)`` on ``y > 0``."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        _check_positive(shape=self.shape, scale=self.scale)

    def draw(self, rng, n):
        return self.scale * rng.standard_exponential(n) ** (-1.0 / self.shape)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            z = np.where(y > 0, (np.maximum(y, 0) / self.scale) ** -self.shape, np.inf)
        return np.exp(-z)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            z = np.where(y > 0, (np.maximum(y, 0) / self.scale) ** -self.shape, np.inf)
        return -np.expm1(-z)

    def quantile(self, tau):
        return self.scale * (-math.log(tau)) ** (-1.0 / self.shape)

    def tail_quantile(self, p):
        return self.scale * (-math.log1p(-p)) ** (-1.0 / self.shape)


@dataclass(frozen=True)
class Pareto:
    """Pareto law with survival ``(scale/y)**shape`` on ``y >= scale``."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        _check_positive(shape=self.shape, scale=self.scale)

    def draw(self, rng, n):
        return self.scale * np.exp(rng.standard_exponential(n) / self.shape)

    def cdf(self, y):
        return 1.0 - self.sf(y)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y > self.scale, (self.scale / np.maximum(y, self.scale)) ** self.shape, 1.0)

    def quantile(self, tau):
        return self.scale * (1.0 - tau) ** (-1.0 / self.shape)

    def tail_quantile(self, p):
        return self.scale * p ** (-1.0 / self.shape)


@dataclass(frozen=True)
class Uniform01:
    def draw(self, rng, n):
        return rng.random(n)

    def cdf(self, y):
        return np.clip(np.asarray(y, dtype=float), 0.0, 1.0)

    def sf(self, y):
        return 1.0 - self.cdf(y)

    def quantile(self, tau):
        return float(tau)

    def tail_quantile(self, p):
        return 1.0 - p


TailLaw = StudentT | Frechet | Pareto | Uniform01


def sample(law: TailLaw, n: int, rng) -> np.ndarray:
    """Draw ``n`` i.i.d. variates from ``law``.

    ``rng`` is a :class:`numpy.random.Generator` or an integer seed.
    """
    if int(n) < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return np.asarray(law.draw(make_rng(rng), int(n)), dtype=float)


def cdf(law: TailLaw, y):
    return law.cdf(y)


def true_quantile(law: TailLaw, tau: float) -> float:
    """Exact ``tau``-quantile of ``law``."""
    _check_level(tau)
    return float(law.quantile(tau))


def true_tail_quantile(law: TailLaw, p: float) -> float:
    """Quantile at level ``1 - p``, computed without forming ``1 - p``."""
    _check_level(p)
    return float(law.tail_quantile(p))


class SimModel(enum.Enum):
    """Potential-outcome models of the simulation study.

    H1: ``Y(1) = 5 S (1+X)``, ``Y(0) = S (1+X)`` with ``S ~ t_3``.
    H2: ``Y(1) = C_2 exp(X)``, ``Y(0) = C_3 exp(X)`` with ``C_s ~ Frechet(s)``.
    H3: ``Y(1) ~ Pareto(1.75+X, 2)``, ``Y(0) ~ Pareto(1.75+5X, 1)``.
    """

    H1 = "h1"
    H2 = "h2"
    H3 = "h3"

    @property
    def true_gammas(self):
        """``(gamma1, gamma0)`` when known in closed form, else ``None``."""
        return {
            SimModel.H1: (1 / 3, 1 / 3),
            SimModel.H2: (1 / 2, 1 / 3),
            SimModel.H3: None,
        }[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f"unknown simulation model {value!r}") from None


def _conditional_sf(model: SimModel, arm: int, y: float, x: np.ndarray) -> np.ndarray:
    if model is SimModel.H1:
        c = 5.0 if arm == 1 else 1.0
        return stats.t.sf(y / (c * (1.0 + x)), 3)
    if model is SimModel.H2:
        s = 2.0 if arm == 1 else 3.0
        if y <= 0:
            return np.ones_like(x)
        return -np.expm1(-((y * np.exp(-x)) ** -s))
    if arm == 1:
        shape, scale = 1.75 + x, 2.0
    else:
        shape, scale = 1.75 + 5.0 * x, 1.0
    if y <= scale:
        return np.ones_like(x)
    return (scale / y) ** shape


def _conditional_cdf(model: SimModel, arm: int, y: float, x: np.ndarray) -> np.ndarray:
    if model is SimModel.H1:
        c = 5.0 if arm == 1 else 1.0
        return stats.t.cdf(y / (c * (1.0 + x)), 3)
    if model is SimModel.H2:
        s = 2.0 if arm == 1 else 3.0
        if y <= 0:
            return np.zeros_like(x)
        return np.exp(-((y * np.exp(-x)) ** -s))
    return 1.0 - _conditional_sf(model, arm, y, x)


@lru_cache(maxsize=None)
def _legendre_unit(m: int):
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (t + 1.0), 0.5 * w


def model_survival(model: SimModel, arm: int, y: float) -> float:
    """``P(Y(arm) > y)``, integrating over ``X ~ Uniform[0, 1]``."""
    model = SimModel.parse(model)
    x, w = _legendre_unit(QUADRATURE_NODES)
    return float(w @ _conditional_sf(model, arm, float(y), x))


def _model_cdf(model: SimModel, arm: int, y: float) -> float:
    x, w = _legendre_unit(QUADRATURE_NODES)
    return float(w @ _conditional_cdf(model, arm, float(y), x))


def _solve_increasing(g) -> float:
    lo, hi = -1.0, 1.0
    while g(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise DomainError("quantile bracket overflow")
    while g(lo) > 0:
        hi, lo = lo, lo * 2.0
        if lo < -1e300:
            raise DomainError("quantile bracket overflow")
    return optimize.brentq(g, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500)


@lru_cache(maxsize=4096)
def _mixture_quantile(model: SimModel, arm: int, level: float, upper: bool) -> float:
    if upper:
        return _solve_increasing(lambda y: level - model_survival(model, arm, y))
    return _solve_increasing(lambda y: _model_cdf(model, arm, y) - level)


def _check_arm(arm):
    if arm not in (0, 1):
        raise DomainError(f"arm must be 0 or 1, got {arm!r}")


def true_model_quantile(model, arm: int, tau: float) -> float:
    """Population ``tau``-quantile of the potential outcome ``Y(arm)``."""
    model = SimModel.parse(model)
    _check_arm(arm)
    _check_level(tau)
    if tau > 0.5:
        return _mixture_quantile(model, arm, 1.0 - tau, True)
    return _mixture_quantile(model, arm, float(tau), False)


def true_model_tail_quantile(model, arm: int, p: float) -> float:
    """Population ``(1 - p)``-quantile of ``Y(arm)`` given the tail mass ``p``."""
    model = SimModel.parse(model)
    _check_arm(arm)
    _check_level(p)
    if p < 0.5:
        return _mixture_quantile(model, arm, float(p), True)
    return _mixture_quantile(model, arm, 1.0 - p, False)
