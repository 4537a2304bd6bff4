"""Inverse-propensity-weighted quantiles of the potential outcomes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, DomainError, EmptyArmError, ShapeError
from .propensity import Sample, propensity_scores

__all__ = ["QuantileEstimate", "weighted_quantile", "arm_weights", "ipw_arm_quantile", "pinball_loss"]


@dataclass(frozen=True)
class QuantileEstimate:
    arm: int
    tau: float
    value: float
    effective_weight_sum: float


def _check_tau(tau):
    if not (0.0 < tau < 1.0):
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")


def pinball_loss(values, weights, tau, q) -> float:
    """Weighted check loss ``sum w (y - q)(tau - 1{y <= q})``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * (values - q) * (tau - (values <= q))))


def weighted_quantile(values, weights, tau: float) -> float:
    """Smallest observed value whose cumulative weight reaches ``tau`` of the total.

    This is an exact minimizer of :func:`pinball_loss` over ``q``. Tied
    values are merged before the cumulative scan.
    """
    _check_tau(tau)
    values = np.asarray(values, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if values.shape != weights.shape:
        raise ShapeError("values and weights must have the same length")
    if values.size == 0 or np.any(weights < 0) or not np.any(weights > 0):
        raise DegenerateWeightsError("need nonnegative weights with at least one positive entry")
    uniq, inverse = np.unique(values, return_inverse=True)
    cum = np.cumsum(np.bincount(inverse.reshape(-1), weights=weights))
    idx = int(np.searchsorted(cum, tau * cum[-1], side="left"))
    return float(uniq[min(idx, uniq.size - 1)])


def arm_weights(d, scores, arm: int) -> np.ndarray:
    """``D/pi`` for the treated arm, ``(1-D)/(1-pi)`` for the control arm."""
    d = np.asarray(d, dtype=float)
    if arm not in (0, 1):
        raise DomainError(f"arm must be 0 or 1, got {arm!r}")
    num = d if arm == 1 else 1.0 - d
    den = np.broadcast_to(scores if arm == 1 else 1.0 - np.asarray(scores, dtype=float), num.shape)
    # rows of the other arm get weight 0, even where den is 0
    return np.divide(num, den, out=np.zeros_like(num), where=num != 0)


def ipw_arm_quantile(sample: Sample, propensity, arm: int, tau: float, scores=None) -> QuantileEstimate:
    """IPW ``tau``-quantile of ``Y(arm)``.

    ``propensity`` is a fitted model or a vector of scores; ``scores`` may
    carry precomputed scores to avoid re-evaluating the model.
    """
    _check_tau(tau)
    mask = sample.d == arm if arm in (0, 1) else None
    if mask is None:
        raise DomainError(f"arm must be 0 or 1, got {arm!r}")
    if not mask.any():
        raise EmptyArmError(f"no observations with d == {arm}")
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    w = arm_weights(sample.d, scores, arm)[mask]
    value = weighted_quantile(sample.y[mask], w, tau)
    return QuantileEstimate(arm=arm, tau=float(tau), value=value, effective_weight_sum=float(w.sum()))
