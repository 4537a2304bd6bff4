"""Sieve logistic propensity scores.

The logit of the propensity score is approximated by a polynomial in the
(min-max standardized) covariates and the coefficients are fitted by maximum
likelihood with a damped Newton iteration. Polynomial terms are ordered
graded-lexicographically so that "the first ``h`` basis functions" is well
defined for any covariate dimension.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    ConvergenceError,
    EmptyArmError,
    GuardError,
    ParameterError,
    RankError,
    SeparationError,
    ShapeError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Sample",
    "SieveBasis",
    "FitOptions",
    "PropensityModel",
    "graded_terms",
    "default_basis_size",
    "default_candidates",
    "fit_sieve_logistic",
    "fit_polynomial_propensity",
    "log_likelihood",
    "loo_log_loss",
    "stepwise_loocv_select",
    "propensity_scores",
]


@dataclass(frozen=True)
class Sample:
    """Observed outcomes ``y``, binary treatments ``d`` and covariates ``x`` (n x r)."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        d = np.asarray(self.d)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if d.ndim != 1 or x.ndim != 2:
            raise ShapeError("d must be a vector and x a matrix")
        n = y.shape[0]
        if n < 1 or d.shape[0] != n or x.shape[0] != n:
            raise ShapeError(f"row counts differ: y={n}, d={d.shape[0]}, x={x.shape[0]}")
        if not np.all((d == 0) | (d == 1)):
            raise ParameterError("treatment indicator must contain only 0 and 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d.astype(np.int8))
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def r(self) -> int:
        return self.x.shape[1]

    def arm_count(self, arm: int) -> int:
        return int(np.sum(self.d == arm))

    def take(self, idx) -> "Sample":
        idx = np.asarray(idx)
        return Sample(self.y[idx], self.d[idx], self.x[idx])

    def require_both_arms(self):
        for arm in (0, 1):
            if self.arm_count(arm) == 0:
                raise EmptyArmError(f"no observations with d == {arm}")


def graded_terms(r: int, max_degree: int):
    """Multi-indices over ``r`` variables up to ``max_degree`` in graded order.

    Within one total degree the exponent vectors come in decreasing
    lexicographic order, e.g. for ``r=2``:
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...``
    """
    terms = []
    for g in range(max_degree + 1):
        block = [t for t in itertools.product(range(g + 1), repeat=r) if sum(t) == g]
        terms.extend(sorted(block, reverse=True))
    return terms


def default_basis_size(n: int, r: int = 1) -> int:
    """Number of sieve terms, ``floor(2 n**(1/11))``."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return int(math.floor(2.0 * n ** (1.0 / 11.0)))


@dataclass(frozen=True)
class SieveBasis:
    terms: tuple

    def __post_init__(self):
        terms = tuple(tuple(int(e) for e in t) for t in self.terms)
        if not terms:
            raise ParameterError("basis must contain at least the constant term")
        r = len(terms[0])
        if any(len(t) != r for t in terms):
            raise ParameterError("multi-indices must all have the same length")
        if any(e < 0 for t in terms for e in t):
            raise ParameterError("exponents must be nonnegative")
        if any(terms[0]):
            raise ParameterError("first basis term must be the constant")
        if len(set(terms)) != len(terms):
            raise ParameterError("basis multi-indices must be unique")
        object.__setattr__(self, "terms", terms)

    @property
    def h(self) -> int:
        return len(self.terms)

    @property
    def r(self) -> int:
        return len(self.terms[0])

    @classmethod
    def first(cls, r: int, h: int) -> "SieveBasis":
        """The first ``h`` terms of the graded order over ``r`` covariates."""
        if h < 1:
            raise ParameterError("h must be >= 1")
        degree = 0
        while math.comb(degree + r, r) < h:
            degree += 1
        return cls(tuple(graded_terms(r, degree)[:h]))

    @classmethod
    def full(cls, r: int, degree: int) -> "SieveBasis":
        return cls(tuple(graded_terms(r, degree)))

    @classmethod
    def linear(cls, r: int) -> "SieveBasis":
        return cls.full(r, 1)

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Design matrix of the basis evaluated at standardized covariates ``z``."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        if z.shape[1] != self.r:
            raise ShapeError(f"expected {self.r} covariates, got {z.shape[1]}")
        cols = [np.prod(z ** np.asarray(t, dtype=float), axis=1) for t in self.terms]
        return np.column_stack(cols)

    def with_term(self, term) -> "SieveBasis":
        return SieveBasis(self.terms + (tuple(term),))


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    clip: tuple = (0.01, 0.99)
    separation_bound: float = 1e3
    max_halvings: int = 40

    def __post_init__(self):
        lo, hi = self.clip
        if not (0.0 < lo < hi < 1.0):
            raise ParameterError(f"clip bounds must satisfy 0 < lo < hi < 1, got {self.clip}")


@dataclass(frozen=True)
class PropensityModel:
    basis: SieveBasis
    coefficients: np.ndarray
    x_min: np.ndarray
    x_scale: np.ndarray
    clip: tuple = (0.01, 0.99)
    n_iter: int = field(default=0, compare=False)
    grad_norm: float = field(default=0.0, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coef.shape[0] != self.basis.h:
            raise ShapeError("coefficient count does not match basis size")
        if not np.all(np.isfinite(coef)):
            raise ParameterError("coefficients must be finite")
        lo, hi = self.clip
        if not (0.0 < lo <= hi < 1.0):
            raise ParameterError(f"clip bounds must lie inside (0, 1), got {self.clip}")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "x_min", np.asarray(self.x_min, dtype=float).reshape(-1))
        object.__setattr__(self, "x_scale", np.asarray(self.x_scale, dtype=float).reshape(-1))
        object.__setattr__(self, "clip", (float(lo), float(hi)))

    @property
    def r(self) -> int:
        return self.basis.r

    def standardize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.r == 1 else x.reshape(1, -1)
        if x.shape[1] != self.r:
            raise ShapeError(f"expected {self.r} covariates, got {x.shape[1]}")
        return (x - self.x_min) / self.x_scale

    def linear_predictor(self, x) -> np.ndarray:
        return self.basis.expand(self.standardize(x)) @ self.coefficients

    def predict(self, x) -> np.ndarray:
        """Clipped propensity scores for every row of ``x``."""
        return np.clip(expit(self.linear_predictor(x)), *self.clip)

    def evaluate(self, row) -> float:
        row = np.asarray(row, dtype=float).reshape(-1)
        if row.shape[0] != self.r:
            raise ShapeError(f"expected {self.r} covariates, got {row.shape[0]}")
        return float(self.predict(row.reshape(1, -1))[0])

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "basis": [list(t) for t in self.basis.terms],
            "coefficients": self.coefficients.tolist(),
            "x_min": self.x_min.tolist(),
            "x_scale": self.x_scale.tolist(),
            "clip": list(self.clip),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PropensityModel":
        return cls(
            basis=SieveBasis(tuple(tuple(t) for t in data["basis"])),
            coefficients=np.asarray(data["coefficients"], dtype=float),
            x_min=np.asarray(data["x_min"], dtype=float),
            x_scale=np.asarray(data["x_scale"], dtype=float),
            clip=tuple(data["clip"]),
        )


def propensity_scores(propensity, x) -> np.ndarray:
    """Scores at the rows of ``x`` from a fitted model or an explicit vector.

    Estimators accept either a :class:`PropensityModel` or an array of
    per-observation scores (useful when the true score is known).
    """
    if hasattr(propensity, "predict"):
        return np.asarray(propensity.predict(x), dtype=float)
    scores = np.asarray(propensity, dtype=float)
    n = np.asarray(x).shape[0]
    if scores.ndim == 0:
        return np.full(n, float(scores))
    if scores.shape != (n,):
        raise ShapeError(f"expected {n} propensity scores, got shape {scores.shape}")
    return scores


def log_likelihood(design: np.ndarray, d: np.ndarray, coef: np.ndarray) -> float:
    eta = design @ coef
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def _standardization(x: np.ndarray):
    x_min = x.min(axis=0)
    x_scale = x.max(axis=0) - x_min
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    return x_min, x_scale


def _newton(design, d, coef, opts: FitOptions):
    """Damped Newton ascent on the Bernoulli log-likelihood.

    Returns ``(coef, n_iter, grad_norm)``.
    """
    n = design.shape[0]
    ll = log_likelihood(design, d, coef)
    for it in range(opts.max_iter + 1):
        mu = expit(design @ coef)
        grad = design.T @ (d - mu) / n
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= opts.tol:
            return coef, it, grad_norm
        if it == opts.max_iter:
            break
        w = mu * (1.0 - mu)
        hess = (design * w[:, None]).T @ design / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _ in range(opts.max_halvings):
            trial = coef + t * step
            ll_trial = log_likelihood(design, d, trial)
            if ll_trial >= ll:
                break
            t *= 0.5
        else:
            break
        coef, ll = trial, ll_trial
        norm = float(np.linalg.norm(coef))
        if norm > opts.separation_bound:
            raise SeparationError(
                f"coefficient norm {norm:.3g} exceeds {opts.separation_bound:g}; "
                f"likelihood appears unbounded along direction {np.round(coef / norm, 4).tolist()}",
                direction=coef / norm,
            )
    mu = expit(design @ coef)
    if np.all((mu < 1e-8) | (mu > 1 - 1e-8)):
        raise SeparationError("fitted probabilities are all 0 or 1", direction=coef)
    raise ConvergenceError(f"Newton iteration stopped with gradient norm {grad_norm:.3g} > {opts.tol:g}")


def fit_sieve_logistic(sample: Sample, basis: SieveBasis, opts: FitOptions | None = None) -> PropensityModel:
    """Maximum-likelihood logistic regression of ``d`` on the sieve basis of ``x``."""
    opts = opts or FitOptions()
    if basis.r != sample.r:
        raise ShapeError(f"basis is over {basis.r} covariates but sample has {sample.r}")
    if sample.n <= basis.h:
        raise RankError(f"need more observations ({sample.n}) than basis terms ({basis.h})")
    x_min, x_scale = _standardization(sample.x)
    design = basis.expand((sample.x - x_min) / x_scale)
    if np.linalg.matrix_rank(design) < basis.h:
        raise RankError(f"design matrix of the {basis.h}-term basis is rank deficient")
    d = sample.d.astype(float)
    coef, n_iter, grad_norm = _newton(design, d, np.zeros(basis.h), opts)
    logger.debug("propensity fit: %d iterations, |grad|=%.2e, clip=%s", n_iter, grad_norm, opts.clip)
    return PropensityModel(basis, coef, x_min, x_scale, opts.clip, n_iter=n_iter, grad_norm=grad_norm)


def fit_polynomial_propensity(sample: Sample, h: int | None = None, opts: FitOptions | None = None) -> PropensityModel:
    """Fit on the first ``h`` graded polynomial terms (default ``floor(2 n**(1/11))``)."""
    if h is None:
        h = default_basis_size(sample.n, sample.r)
    return fit_sieve_logistic(sample, SieveBasis.first(sample.r, h), opts)


def default_candidates(r: int):
    """Linear terms, then squares, then pairwise interactions."""
    linear = [t for t in graded_terms(r, 1) if sum(t) == 1]
    quad = [t for t in graded_terms(r, 2) if sum(t) == 2]
    squares = [t for t in quad if max(t) == 2]
    inter = [t for t in quad if max(t) == 1]
    return linear + squares + inter


def loo_log_loss(sample: Sample, basis: SieveBasis, opts: FitOptions | None = None) -> float:
    """Mean leave-one-out log-loss of the logistic sieve fit.

    Each held-out fit is warm-started from the full-sample coefficients.
    """
    opts = opts or FitOptions()
    x_min, x_scale = _standardization(sample.x)
    design = basis.expand((sample.x - x_min) / x_scale)
    d = sample.d.astype(float)
    full, _, _ = _newton(design, d, np.zeros(basis.h), opts)
    keep = np.ones(sample.n, dtype=bool)
    total = 0.0
    for i in range(sample.n):
        keep[i] = False
        coef, _, _ = _newton(design[keep], d[keep], full, opts)
        keep[i] = True
        eta = float(design[i] @ coef)
        total += np.logaddexp(0.0, eta) - d[i] * eta
    return total / sample.n


def stepwise_loocv_select(
    sample: Sample,
    candidate_terms,
    opts: FitOptions | None = None,
    max_n: int = 2000,
) -> SieveBasis:
    """Forward stepwise selection of polynomial terms by leave-one-out log-loss.

    Starts from the linear model, then greedily adds squared terms, then the
    remaining higher-order terms (interactions), one at a time. A term is
    accepted only if it strictly lowers the LOO log-loss; among equally good
    candidates the lexicographically smallest multi-index wins. Candidates
    whose fit separates are skipped with a warning.
    """
    opts = opts or FitOptions()
    r = sample.r
    candidates = [tuple(int(e) for e in t) for t in candidate_terms]
    if sample.n > max_n:
        raise GuardError(f"leave-one-out selection capped at n <= {max_n}, got n={sample.n}")
    if sample.n < 2 * len(candidates):
        raise GuardError(f"n={sample.n} is below twice the candidate count ({len(candidates)})")
    linear = [t for t in graded_terms(r, 1) if sum(t) == 1]
    missing = [t for t in linear if t not in candidates]
    if missing:
        raise ParameterError(f"candidate pool lacks linear terms {missing}")
    squares = [t for t in candidates if sum(t) == 2 and max(t) == 2]
    others = [t for t in candidates if sum(t) >= 2 and t not in squares]

    basis = SieveBasis.linear(r)
    best = loo_log_loss(sample, basis, opts)
    for pool in (squares, others):
        pool = sorted(pool)
        while pool:
            scored = []
            for term in pool:
                trial = basis.with_term(term)
                try:
                    loss = loo_log_loss(sample, trial, opts)
                except (SeparationError, ConvergenceError) as exc:
                    warnings.warn(f"skipping candidate term {term}: {exc}", RuntimeWarning, stacklevel=2)
                    continue
                scored.append((loss, term))
            if not scored:
                break
            loss, term = min(scored)
            if not loss < best:
                break
            basis, best = basis.with_term(term), loss
            pool.remove(term)
            logger.info("stepwise LOO: added %s (loss %.6f)", term, loss)
    return basis
