"""Extremal quantile treatment effects for heavy-tailed outcomes.

Inverse-propensity-weighted intermediate quantiles are extrapolated to
extreme levels with a causal Hill estimator of each arm's tail index, and
a plug-in variance gives normal confidence intervals.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapConfig, BootstrapResult, bootstrap_ci
from .distributions import Frechet, Pareto, SimModel, StudentT, Uniform01, make_rng, sample, true_model_quantile, true_quantile
from .errors import ExtremalQteError
from .extrapolation import (
    ExtrapolationConfig,
    ExtremalQteResult,
    extrapolate_quantile,
    extremal_qte,
    firpo_zhang_qte,
    hill_qte,
    k_sweep,
    pickands_qte,
)
from .inference import VarianceComponents, confidence_interval, sigma2_hat, variance_components
from .ipw_quantile import QuantileEstimate, ipw_arm_quantile, weighted_quantile
from .propensity import (
    FitOptions,
    PropensityModel,
    Sample,
    SieveBasis,
    default_basis_size,
    fit_polynomial_propensity,
    fit_sieve_logistic,
    stepwise_loocv_select,
)
from .tail_index import TailIndexEstimate, causal_hill, causal_pickands


def load_schema(name: str) -> dict:
    """Return one of the shipped JSON schemas, e.g. ``load_schema("qte_result.v1")``."""
    import json
    from importlib import resources

    return json.loads(resources.files(__name__).joinpath("schemas", f"{name}.json").read_text(encoding="utf-8"))
