"""Nonparametric bootstrap intervals around the extrapolated QTE.

Rows ``(Y, D, X)`` are resampled with replacement and the whole pipeline,
including the propensity fit, is rerun on every resample. The interval is
the normal one, ``delta -/+ z * sd(bootstrap deltas)``, centred at the
full-sample estimate.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import make_rng
from .errors import ExtremalQteError, ParameterError, ReliabilityError, UnsupportedMethodError
from .extrapolation import SCHEMA_VERSION, ExtrapolationConfig, hill_qte, pickands_qte
from .inference import normal_quantile
from .propensity import FitOptions, Sample, fit_polynomial_propensity

__all__ = ["BootstrapMethod", "BootstrapConfig", "BootstrapResult", "resample_indices", "bootstrap_ci"]

MAX_DROP_FRACTION = 0.2


class BootstrapMethod(str, enum.Enum):
    HILL = "hill"
    PICKANDS = "pickands"
    ZHANG = "zhang"


@dataclass(frozen=True)
class BootstrapConfig:
    reps: int
    method: BootstrapMethod
    base: ExtrapolationConfig
    seed: int
    basis_size: int | None = None
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if self.reps < 2:
            raise ParameterError(f"need at least 2 bootstrap replicates, got {self.reps}")
        object.__setattr__(self, "method", BootstrapMethod(self.method))


@dataclass(frozen=True)
class BootstrapResult:
    delta: float
    lo: float
    hi: float
    sigma_star: float
    method: BootstrapMethod
    effective_b: int
    dropped: int
    replicate_deltas: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method.value,
            "delta": self.delta,
            "ci": {"lo": self.lo, "hi": self.hi},
            "sigma_star": self.sigma_star,
            "effective_B": self.effective_b,
            "dropped": self.dropped,
        }


def resample_indices(n: int, seed: int, replicate: int) -> np.ndarray:
    return make_rng(seed, replicate).integers(0, n, size=n)


def _estimator(method: BootstrapMethod):
    if method is BootstrapMethod.HILL:
        return hill_qte
    if method is BootstrapMethod.PICKANDS:
        return pickands_qte
    raise UnsupportedMethodError(
        "the b-out-of-n bootstrap needs tuning recipes that are not part of this package"
    )


def _pipeline(sample: Sample, cfg: BootstrapConfig, estimator, propensity=None) -> float:
    if propensity is None:
        propensity = fit_polynomial_propensity(sample, cfg.basis_size, cfg.fit_options)
    return estimator(sample, propensity, cfg.base).delta


def bootstrap_ci(sample: Sample, cfg: BootstrapConfig, propensity=None, indices=None) -> BootstrapResult:
    """Bootstrap normal interval for ``cfg.method``.

    ``propensity`` optionally supplies the full-sample score model (it is
    fitted otherwise); resamples always refit. ``indices`` overrides the
    seeded resampling with explicit row-index arrays, one per replicate.
    """
    estimator = _estimator(cfg.method)
    delta = _pipeline(sample, cfg, estimator, propensity)
    reps = cfg.reps if indices is None else len(indices)
    deltas = []
    for b in range(reps):
        idx = resample_indices(sample.n, cfg.seed, b) if indices is None else np.asarray(indices[b])
        try:
            deltas.append(_pipeline(sample.take(idx), cfg, estimator))
        except ExtremalQteError:
            continue
    dropped = reps - len(deltas)
    if dropped > MAX_DROP_FRACTION * reps or len(deltas) < 2:
        raise ReliabilityError(f"{dropped} of {reps} bootstrap replicates failed")
    # sorted so the result does not depend on replicate order
    deltas = np.sort(np.asarray(deltas))
    sigma = float(np.std(deltas, ddof=1))
    half = normal_quantile(1.0 - cfg.base.alpha / 2.0) * sigma
    return BootstrapResult(delta, delta - half, delta + half, sigma, cfg.method, len(deltas), dropped, deltas)
