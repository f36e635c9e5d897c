# tclkit/tcl.py
"""
Two-stage l1 transfer estimator for the target-domain propensity coefficients.

  rough:      b_rough = argmin (1/n_S) sum_S [-a x'b + G(x'b)]
  correction: b_T     = argmin (1/n_T) sum_T [-a x'b + G(x'b)] + lam * ||b - b_rough||_1

The correction is solved in the deviation z = b - b_rough by proximal gradient
(soft-thresholding), so untouched coordinates of delta are exactly zero.
"""
from __future__ import annotations
import logging, math
from dataclasses import dataclass, field

import numpy as np

from tclkit.core import LinkKind, ObservationSet, validate
from tclkit.errors import DimensionError, ValidationError
from tclkit.glm import (GlmFitConfig, PropensityModel, descend, fit_glm,
                        negative_log_likelihood, nll_gradient)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TransferFit:
    beta_rough: np.ndarray
    beta_corrected: np.ndarray
    delta: np.ndarray
    lam: float
    converged: bool
    link: LinkKind = LinkKind.SIGMOID
    iterations: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.delta)

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.delta))

    def corrected_model(self) -> PropensityModel:
        return PropensityModel(self.link, self.beta_corrected, self.converged, self.iterations)


@dataclass(frozen=True)
class TheoreticalLambdaParams:
    covariate_bound: float
    n_target: int
    n_source: int
    dimension: int

    def __post_init__(self):
        if not (self.covariate_bound > 0 and math.isfinite(self.covariate_bound)):
            raise ValidationError(f"covariate_bound must be positive and finite, got {self.covariate_bound}")
        for name in ("n_target", "n_source", "dimension"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be at least 1, got {getattr(self, name)}")

    @classmethod
    def from_pair(cls, source: ObservationSet, target: ObservationSet) -> "TheoreticalLambdaParams":
        """Empirical M_X: the largest absolute covariate entry over both domains."""
        bound = float(max(np.abs(source.covariates).max(), np.abs(target.covariates).max()))
        return cls(covariate_bound=bound, n_target=target.n, n_source=source.n, dimension=target.d)


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def rough_estimate(source: ObservationSet, link: LinkKind, config: GlmFitConfig | None = None) -> PropensityModel:
    """Source-domain MLE, used as the rough target estimate."""
    return fit_glm(source, link, config)


def bias_correct(target: ObservationSet, rough: PropensityModel, lam: float,
                 config: GlmFitConfig | None = None) -> TransferFit:
    config = config or GlmFitConfig.default()
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValidationError(f"lambda must be finite, got {lam}")
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    validate(target)
    X, a = target.covariates, target.treatment
    if X.shape[1] != rough.d:
        raise DimensionError(
            f"dimension mismatch: rough model has {rough.d} coefficients, target has {X.shape[1]} columns"
        )
    anchor = rough.beta
    link, m = rough.link, config.domain_margin
    # without the penalty the anchor is irrelevant; start where the target-only fit starts
    z0 = -anchor if lam == 0.0 else np.zeros_like(anchor)

    res = descend(
        lambda z: negative_log_likelihood(anchor + z, X, a, link, m),
        lambda z: nll_gradient(anchor + z, X, a, link, m),
        z0,
        config,
        prox=lambda v, step: soft_threshold(v, step * lam),
        penalty=lambda z: lam * float(np.abs(z).sum()),
    )
    if not res.converged:
        log.debug("bias correction at lambda=%g stopped after %d iterations", lam, res.iterations)
    corrected = anchor + res.x
    delta = corrected - anchor
    for v in (corrected, delta):
        v.setflags(write=False)
    return TransferFit(
        beta_rough=anchor, beta_corrected=corrected, delta=delta, lam=lam,
        converged=res.converged, link=link, iterations=res.iterations, history=tuple(res.history),
    )


def anchor_lambda_bound(target: ObservationSet, rough: PropensityModel, margin: float = 1e-6) -> float:
    """Smallest lambda at which the correction stays at the anchor: max_j |d/db_j smooth part| at b_rough."""
    g = nll_gradient(rough.beta, target.covariates, target.treatment, rough.link, margin)
    return float(np.abs(g).max())


def theoretical_lambda(params: TheoreticalLambdaParams) -> float:
    """sqrt(5 M^2 log(6 n_T d) / (2 n_T) * max(25, n_T d^2 / n_S))."""
    M, nT, nS, d = params.covariate_bound, params.n_target, params.n_source, params.dimension
    return math.sqrt(5.0 * M * M * math.log(6.0 * nT * d) / (2.0 * nT) * max(25.0, nT * d * d / nS))
