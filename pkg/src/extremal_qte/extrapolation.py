"""Extreme quantile extrapolation and the extremal QTE estimator.

Upper tail only. For a lower-tail QTE, negate the outcome, run the
estimator, and negate the resulting quantiles, effect and interval bounds
(the interval bounds also swap).
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExtremalQteError, NormalizationError, OrderingError, ParameterError, PositivityError
from .inference import VarianceComponents, confidence_interval, sigma2_hat, variance_components
from .ipw_quantile import QuantileEstimate, ipw_arm_quantile
from .propensity import Sample, propensity_scores
from .tail_index import TailIndexEstimate, causal_hill, causal_pickands

__all__ = [
    "ExtrapolationRangeWarning",
    "ExtrapolationConfig",
    "ExtremalQteResult",
    "PointEstimate",
    "SweepRow",
    "default_k",
    "extrapolate_quantile",
    "normalizing_factor",
    "extremal_qte",
    "hill_qte",
    "pickands_qte",
    "firpo_zhang_qte",
    "k_sweep",
]

SCHEMA_VERSION = 1


class ExtrapolationRangeWarning(UserWarning):
    """``log(tau/p)`` exceeds ``sqrt(k)``: the extrapolation is pushed far."""


def default_k(n: int, exponent: float = 0.65) -> float:
    return float(n) ** exponent


@dataclass(frozen=True)
class ExtrapolationConfig:
    """Sample size ``n``, intermediate budget ``k`` (tail level ``k/n``), extreme level ``p``."""

    n: int
    k: float
    p: float
    alpha: float = 0.1

    def __post_init__(self):
        if int(self.n) < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.k > 0 and self.k < self.n):
            raise ParameterError(f"k must satisfy 0 < k < n, got k={self.k}, n={self.n}")
        if not (0.0 < self.p < self.tau):
            raise OrderingError(f"need 0 < p < k/n, got p={self.p}, k/n={self.tau}")

    @property
    def tau(self) -> float:
        return self.k / self.n

    @classmethod
    def with_default_k(cls, n: int, p: float, alpha: float = 0.1, exponent: float = 0.65):
        return cls(n=n, k=default_k(n, exponent), p=p, alpha=alpha)


@dataclass(frozen=True)
class ExtremalQteResult:
    q1_extreme: float
    q0_extreme: float
    delta: float
    gamma1: TailIndexEstimate
    gamma0: TailIndexEstimate
    beta_n: float
    kappa_hat: float
    sigma2_hat: float
    ci: tuple
    components: VarianceComponents
    q1_intermediate: QuantileEstimate
    q0_intermediate: QuantileEstimate
    config: ExtrapolationConfig

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.sigma2_hat)

    def to_dict(self) -> dict:
        def tail(t: TailIndexEstimate):
            return {"arm": t.arm, "method": t.method.value, "gamma": t.gamma, "k": t.k, "threshold": t.threshold}

        def quant(q: QuantileEstimate):
            return {"arm": q.arm, "tau": q.tau, "value": q.value, "effective_weight_sum": q.effective_weight_sum}

        return {
            "schema_version": SCHEMA_VERSION,
            "config": dataclasses.asdict(self.config),
            "q1_extreme": self.q1_extreme,
            "q0_extreme": self.q0_extreme,
            "delta": self.delta,
            "gamma1": tail(self.gamma1),
            "gamma0": tail(self.gamma0),
            "beta_n": self.beta_n,
            "kappa_hat": self.kappa_hat,
            "sigma2_hat": self.sigma2_hat,
            "ci": {"lo": self.ci[0], "hi": self.ci[1], "level": 1.0 - self.config.alpha},
            "components": self.components.to_dict(),
            "q1_intermediate": quant(self.q1_intermediate),
            "q0_intermediate": quant(self.q0_intermediate),
        }


@dataclass(frozen=True)
class PointEstimate:
    """Point-only QTE estimate (Pickands extrapolation or empirical)."""

    delta: float
    q1: float
    q0: float
    gamma1: float = float("nan")
    gamma0: float = float("nan")
    saturated: bool = False


def extrapolate_quantile(q_hat: QuantileEstimate, gamma: TailIndexEstimate | float, p: float, tail: float | None = None) -> float:
    """``q_hat * (tail / p) ** gamma`` where ``tail = 1 - q_hat.tau`` unless given."""
    if tail is None:
        tail = 1.0 - q_hat.tau
    if not (0.0 < p < tail):
        raise OrderingError(f"extreme level p={p} must lie below the intermediate tail mass {tail}")
    if not q_hat.value > 0:
        raise PositivityError(f"intermediate quantile must be positive, got {q_hat.value!r}")
    g = gamma.gamma if isinstance(gamma, TailIndexEstimate) else float(gamma)
    return q_hat.value * (tail / p) ** g


def normalizing_factor(k: float, tau: float, p: float, q1_extreme: float, q0_extreme: float) -> float:
    """``sqrt(k) / (log(tau/p) * max(Q1, Q0))``."""
    top = max(q1_extreme, q0_extreme)
    if not top > 0:
        raise NormalizationError(f"largest extrapolated quantile must be positive, got {top!r}")
    if not tau > p:
        raise OrderingError("normalizing factor needs tau > p")
    return math.sqrt(k) / (math.log(tau / p) * top)


def _check_config(sample: Sample, cfg: ExtrapolationConfig):
    if cfg.n != sample.n:
        raise ParameterError(f"config is for n={cfg.n} but the sample has {sample.n} rows")
    sample.require_both_arms()


def extremal_qte(sample: Sample, propensity, cfg: ExtrapolationConfig, scores=None) -> ExtremalQteResult:
    """Hill-extrapolated extremal QTE at level ``1 - p`` with its normal confidence interval."""
    _check_config(sample, cfg)
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    tau, k, p = cfg.tau, cfg.k, cfg.p
    if math.log(tau / p) > math.sqrt(k):
        warnings.warn(
            f"log(k/(n p)) = {math.log(tau / p):.3g} exceeds sqrt(k) = {math.sqrt(k):.3g}",
            ExtrapolationRangeWarning,
            stacklevel=2,
        )
    q1 = ipw_arm_quantile(sample, None, 1, 1.0 - tau, scores=scores)
    q0 = ipw_arm_quantile(sample, None, 0, 1.0 - tau, scores=scores)
    g1 = causal_hill(sample, None, 1, q1, k, scores=scores)
    g0 = causal_hill(sample, None, 0, q0, k, scores=scores)
    Q1 = extrapolate_quantile(q1, g1, p, tail=tau)
    Q0 = extrapolate_quantile(q0, g0, p, tail=tau)
    delta = Q1 - Q0
    beta_n = normalizing_factor(k, tau, p, Q1, Q0)
    if not Q0 > 0:
        raise NormalizationError(f"tail ratio undefined for Q0={Q0!r}")
    kappa = Q1 / Q0
    comps = variance_components(sample, None, q1, q0, (g1, g0), kappa, k, scores=scores)
    s2 = sigma2_hat(comps)
    ci = confidence_interval(delta, s2, beta_n, cfg.alpha)
    return ExtremalQteResult(Q1, Q0, delta, g1, g0, beta_n, kappa, s2, ci, comps, q1, q0, cfg)


def hill_qte(sample: Sample, propensity, cfg: ExtrapolationConfig, scores=None) -> PointEstimate:
    """Point estimate of :func:`extremal_qte` without the variance step."""
    _check_config(sample, cfg)
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    out = {}
    for arm in (1, 0):
        q = ipw_arm_quantile(sample, None, arm, 1.0 - cfg.tau, scores=scores)
        g = causal_hill(sample, None, arm, q, cfg.k, scores=scores)
        out[arm] = (extrapolate_quantile(q, g, cfg.p, tail=cfg.tau), g.gamma)
    (Q1, g1), (Q0, g0) = out[1], out[0]
    return PointEstimate(Q1 - Q0, Q1, Q0, g1, g0)


def pickands_qte(sample: Sample, propensity, cfg: ExtrapolationConfig, scores=None) -> PointEstimate:
    """Extremal QTE extrapolated with the causal Pickands index instead of Hill."""
    _check_config(sample, cfg)
    tau = cfg.tau
    if not 4.0 * tau < 1.0:
        raise DomainError(f"Pickands estimator needs 4k/n < 1, got {4.0 * tau}")
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    out = {}
    for arm in (1, 0):
        qs = [ipw_arm_quantile(sample, None, arm, 1.0 - m * tau, scores=scores) for m in (1, 2, 4)]
        g = causal_pickands(*qs, k=cfg.k)
        out[arm] = (extrapolate_quantile(qs[0], g, cfg.p, tail=tau), g.gamma)
    (Q1, g1), (Q0, g0) = out[1], out[0]
    return PointEstimate(Q1 - Q0, Q1, Q0, g1, g0)


def firpo_zhang_qte(sample: Sample, propensity, p: float, scores=None) -> PointEstimate:
    """Non-extrapolated IPW quantile difference at level ``1 - p``.

    ``saturated`` is set when either arm's estimate is the arm maximum, which
    is forced once ``p`` falls below the smallest normalized weight.
    """
    sample.require_both_arms()
    if scores is None:
        scores = propensity_scores(propensity, sample.x)
    q1 = ipw_arm_quantile(sample, None, 1, 1.0 - p, scores=scores).value
    q0 = ipw_arm_quantile(sample, None, 0, 1.0 - p, scores=scores).value
    saturated = q1 == sample.y[sample.d == 1].max() or q0 == sample.y[sample.d == 0].max()
    return PointEstimate(q1 - q0, q1, q0, saturated=bool(saturated))


@dataclass(frozen=True)
class SweepRow:
    k: float
    delta: float = float("nan")
    ci_lo: float = float("nan")
    ci_hi: float = float("nan")
    gamma1: float = float("nan")
    gamma0: float = float("nan")
    error: str = ""


def k_sweep(sample: Sample, propensity, cfg: ExtrapolationConfig, k_grid) -> list:
    """One :func:`extremal_qte` evaluation per ``k`` in ``k_grid``; failures are kept as rows."""
    scores = propensity_scores(propensity, sample.x)
    rows = []
    for k in np.asarray(k_grid, dtype=float).reshape(-1):
        try:
            res = extremal_qte(sample, None, dataclasses.replace(cfg, k=float(k)), scores=scores)
        except ExtremalQteError as exc:
            rows.append(SweepRow(float(k), error=f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(float(k), res.delta, res.ci[0], res.ci[1], res.gamma1.gamma, res.gamma0.gamma))
    return rows
