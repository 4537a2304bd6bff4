"""Plug-in asymptotic variance and normal confidence intervals for the extremal QTE."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np

from .errors import DomainError, IndefiniteCovarianceError
from .ipw_quantile import QuantileEstimate
from .propensity import Sample, propensity_scores
from .tail_index import hill_terms

__all__ = [
    "VarianceComponents",
    "variance_components",
    "covariance_matrix",
    "loading_matrix",
    "kappa_vector",
    "sigma2_hat",
    "normal_quantile",
    "confidence_interval",
]


@dataclass(frozen=True)
class VarianceComponents:
    """Entries of the simplified 4x4 covariance plus the Hill estimates and tail ratio."""

    H1: float
    H0: float
    G1: float
    G0: float
    J1: float
    J0: float
    gamma1: float
    gamma0: float
    kappa: float

    def to_dict(self) -> dict:
        return asdict(self)


def _arm_sums(sample, scores, arm, threshold, k):
    w, logex = hill_terms(sample, scores, arm, threshold)
    w2 = w * w
    return (
        float(np.sum(w2) / k),
        float(np.sum(logex**2 * w2) / k),
        float(np.sum(logex * w2) / k),
    )


def variance_components(
    sample: Sample,
    propensity,
    q1: QuantileEstimate,
    q0: QuantileEstimate,
    gammas,
    kappa: float,
    k: float,
    scores=None,
) -> VarianceComponents:
    """Squared-weight tail sums ``H``, ``G``, ``J`` for both arms, each divided by ``k``."""
    if not k > 0:
        raise DomainError(f"k must be positive, got {k!r}")
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    h1, g1, j1 = _arm_sums(sample, scores, 1, q1.value, k)
    h0, g0, j0 = _arm_sums(sample, scores, 0, q0.value, k)
    gamma1, gamma0 = (float(getattr(g, "gamma", g)) for g in gammas)
    return VarianceComponents(h1, h0, g1, g0, j1, j0, gamma1, gamma0, float(kappa))


def covariance_matrix(c: VarianceComponents) -> np.ndarray:
    """The 4x4 covariance estimate, ordered (Hill 1, Hill 0, quantile 1, quantile 0)."""
    return np.array(
        [
            [c.G1, 0.0, c.J1, 0.0],
            [0.0, c.G0, 0.0, c.J0],
            [c.J1, 0.0, c.H1, 0.0],
            [0.0, c.J0, 0.0, c.H0],
        ]
    )


def loading_matrix(c: VarianceComponents) -> np.ndarray:
    return np.array([[1.0, 0.0, -c.gamma1, 0.0], [0.0, 1.0, 0.0, -c.gamma0]])


def kappa_vector(kappa: float) -> np.ndarray:
    if not kappa > 0:
        raise DomainError(f"tail ratio kappa must be positive, got {kappa!r}")
    return np.array([min(1.0, kappa), -min(1.0, 1.0 / kappa)])


def sigma2_hat(c: VarianceComponents) -> float:
    """Quadratic form ``v' B S B' v``.

    The covariance has no cross-arm entries, so ``B S B'`` is diagonal with
    entries ``G - 2 gamma J + gamma**2 H`` and the form reduces to two terms.
    """
    v1, v0 = kappa_vector(c.kappa)
    a1 = c.G1 - 2.0 * c.gamma1 * c.J1 + c.gamma1**2 * c.H1
    a0 = c.G0 - 2.0 * c.gamma0 * c.J0 + c.gamma0**2 * c.H0
    s2 = v1 * v1 * a1 + v0 * v0 * a0
    if not math.isfinite(s2):
        raise DomainError("variance components must be finite")
    if s2 < 0:
        raise IndefiniteCovarianceError(f"plug-in variance is negative ({s2!r})")
    return float(s2)


def normal_quantile(prob: float) -> float:
    if not (0.0 < prob < 1.0):
        raise DomainError(f"probability must lie in (0, 1), got {prob!r}")
    return NormalDist().inv_cdf(prob)


def confidence_interval(delta: float, sigma2: float, beta_n: float, alpha: float):
    """``delta -/+ z_{1-alpha/2} sqrt(sigma2) / beta_n``."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not (sigma2 >= 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be a nonnegative finite number, got {sigma2!r}")
    if not (beta_n > 0 and math.isfinite(beta_n)):
        raise DomainError(f"beta_n must be positive, got {beta_n!r}")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(sigma2) / beta_n
    return (delta - half, delta + half)
