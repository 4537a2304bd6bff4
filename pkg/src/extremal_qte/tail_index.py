"""Causal extreme value index estimators (Hill and Pickands type)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpacingsError, DomainError, NoExceedanceError, PositivityError
from .ipw_quantile import QuantileEstimate, arm_weights
from .propensity import Sample, propensity_scores

__all__ = ["TailMethod", "TailIndexEstimate", "causal_hill", "causal_pickands", "hill_terms"]


class TailMethod(str, enum.Enum):
    CAUSAL_HILL = "causal_hill"
    CAUSAL_PICKANDS = "causal_pickands"


@dataclass(frozen=True)
class TailIndexEstimate:
    arm: int
    method: TailMethod
    gamma: float
    k: float
    threshold: float


def hill_terms(sample: Sample, scores, arm: int, threshold: float):
    """Weights and log-excesses of the observations of ``arm`` above ``threshold``.

    Shared by the Hill estimator and the plug-in covariance terms.
    """
    if not threshold > 0:
        raise PositivityError(f"threshold must be positive for log-excesses, got {threshold!r}")
    w = arm_weights(sample.d, scores, arm)
    exceed = (sample.y > threshold) & (w > 0)
    if not exceed.any():
        raise NoExceedanceError(f"no observation of arm {arm} exceeds {threshold!r}")
    return w[exceed], np.log(sample.y[exceed]) - math.log(threshold)


def causal_hill(sample: Sample, propensity, arm: int, q_hat: QuantileEstimate, k: float, scores=None) -> TailIndexEstimate:
    """Inverse-propensity-weighted Hill estimator of the tail index of ``Y(arm)``.

    The weighted sum of log-excesses over ``q_hat`` is divided by ``k``
    itself, not by the realized number of exceedances.
    """
    if not k > 0:
        raise DomainError(f"k must be positive, got {k!r}")
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    w, logex = hill_terms(sample, scores, arm, q_hat.value)
    gamma = float(np.sum(w * logex) / k)
    return TailIndexEstimate(arm, TailMethod.CAUSAL_HILL, gamma, float(k), q_hat.value)


def causal_pickands(q_tau: QuantileEstimate, q_2tau: QuantileEstimate, q_4tau: QuantileEstimate, k: float | None = None) -> TailIndexEstimate:
    """Pickands-type index from IPW quantiles at levels ``1-t``, ``1-2t``, ``1-4t``."""
    if not (q_tau.arm == q_2tau.arm == q_4tau.arm):
        raise DomainError("the three quantile estimates must come from the same arm")
    s1 = q_tau.value - q_2tau.value
    s2 = q_2tau.value - q_4tau.value
    if not (s1 > 0 and s2 > 0):
        raise DegenerateSpacingsError(
            f"quantile spacings must be positive, got {s1!r} and {s2!r}; the tail level is likely too small"
        )
    gamma = math.log(s1 / s2) / math.log(2.0)
    if k is None:
        k = float("nan")
    return TailIndexEstimate(q_tau.arm, TailMethod.CAUSAL_PICKANDS, gamma, float(k), q_tau.value)
