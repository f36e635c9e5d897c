# tclkit/estimators.py
from __future__ import annotations
import logging, math
from dataclasses import dataclass

import numpy as np
from scipy import special

from tclkit.core import CausalEstimate, DomainPair, EstimateMethod, LinkKind, ObservationSet, validate
from tclkit.errors import DimensionError, RankDeficiencyError, ValidationError
from tclkit.glm import GlmFitConfig, fit_glm, predict_propensity
from tclkit.tcl import TransferFit, bias_correct, rough_estimate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OlsResult:
    coefficient: float
    t_statistic: float
    p_value: float
    standard_error: float = math.nan
    dof: int = 0


def ipw_ace(obs: ObservationSet, propensities, domain_label: str = "target") -> CausalEstimate:
    """(1/n) sum[a y / e - (1 - a) y / (1 - e)]."""
    e = np.asarray(propensities, dtype=float).ravel()
    if e.shape[0] != obs.n:
        raise DimensionError(f"dimension mismatch: {e.shape[0]} propensities for {obs.n} rows")
    bad = np.flatnonzero(~((e > 0.0) & (e < 1.0)))
    if bad.size:
        raise ValidationError(f"propensity {e[bad[0]]} at row {int(bad[0])} is not strictly inside (0, 1)")
    a, y = obs.treatment, obs.outcome
    value = float(np.mean(a * y / e - (1.0 - a) * y / (1.0 - e)))
    return CausalEstimate(value, EstimateMethod.IPW, domain_label)


def target_only_ace(obs: ObservationSet, link: LinkKind, config: GlmFitConfig | None = None,
                    domain_label: str = "target") -> CausalEstimate:
    """IPW with a GLM propensity fitted on the same set (no transfer)."""
    config = config or GlmFitConfig.default()
    model = fit_glm(obs, link, config)
    return ipw_ace(obs, predict_propensity(model, obs, config.clip_epsilon), domain_label)


def pooled_ace(pair: DomainPair, link: LinkKind, config: GlmFitConfig | None = None) -> CausalEstimate:
    return target_only_ace(pair.pooled(), link, config, domain_label="pooled")


def tcl_ace(pair: DomainPair, link: LinkKind, lam: float,
            config: GlmFitConfig | None = None,
            rough=None) -> tuple[CausalEstimate, TransferFit]:
    """l1-TCL plug-in: rough fit on source, l1 correction on target, IPW on target."""
    config = config or GlmFitConfig.default()
    rough = rough if rough is not None else rough_estimate(pair.source, link, config)
    fit = bias_correct(pair.target, rough, lam, config)
    e = predict_propensity(fit.corrected_model(), pair.target, config.clip_epsilon)
    est = ipw_ace(pair.target, e, "target")
    est = CausalEstimate(est.value, EstimateMethod.TCL, "target",
                         {"lambda": fit.lam, "support": fit.support.tolist(), "converged": fit.converged})
    return est, fit


def pearson_correlation(a, b) -> float:
    x = np.asarray(a, dtype=float).ravel()
    y = np.asarray(b, dtype=float).ravel()
    if x.size != y.size:
        raise DimensionError(f"dimension mismatch: {x.size} vs {y.size} values")
    if x.size < 2:
        raise ValidationError("correlation needs at least two observations")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(xc @ xc), math.sqrt(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise ValidationError("correlation undefined for constant input (zero variance)")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def correlation_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of H0: rho = 0 from the t-transform of r."""
    dof = n - 2
    if dof < 1:
        return math.nan
    if abs(r) >= 1.0:
        return 0.0
    t2 = r * r * dof / (1.0 - r * r)
    return float(special.betainc(0.5 * dof, 0.5, dof / (dof + t2)))


def student_t_two_sided(t: float, dof: int) -> float:
    """P(|T| >= |t|) for Student-t via the regularized incomplete beta function."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(0.5 * dof, 0.5, dof / (dof + t * t)))


def correlation_estimate(obs: ObservationSet, domain_label: str = "target") -> CausalEstimate:
    r = pearson_correlation(obs.treatment, obs.outcome)
    return CausalEstimate(r, EstimateMethod.CORRELATION, domain_label,
                          {"p_value": correlation_pvalue(r, obs.n)})


def ols_treatment_coefficient(obs: ObservationSet) -> OlsResult:
    """OLS of outcome on [1 | treatment | covariates]; inference for the treatment column."""
    validate(obs)
    n = obs.n
    Z = np.column_stack([np.ones(n), obs.treatment, obs.covariates])
    p = Z.shape[1]
    if n <= p:
        raise RankDeficiencyError(f"OLS needs more rows than parameters: n={n}, p={p}")
    if np.linalg.matrix_rank(Z) < p:
        raise RankDeficiencyError(f"design matrix [intercept | treatment | covariates] is rank deficient (p={p})")
    ZtZ = Z.T @ Z
    coef = np.linalg.solve(ZtZ, Z.T @ obs.outcome)
    resid = obs.outcome - Z @ coef
    dof = n - p
    sigma2 = float(resid @ resid) / dof
    cov_11 = float(np.linalg.solve(ZtZ, np.eye(p)[:, 1])[1])
    se = math.sqrt(max(sigma2 * cov_11, 0.0))
    b = float(coef[1])
    if se == 0.0:
        t = math.copysign(math.inf, b) if b != 0.0 else 0.0
        pval = 0.0 if b != 0.0 else 1.0
    else:
        t = b / se
        pval = student_t_two_sided(t, dof)
    return OlsResult(b, t, min(max(pval, 0.0), 1.0), se, dof)


def ols_estimate(obs: ObservationSet, domain_label: str = "target") -> CausalEstimate:
    res = ols_treatment_coefficient(obs)
    return CausalEstimate(res.coefficient, EstimateMethod.OLS, domain_label,
                          {"t_statistic": res.t_statistic, "p_value": res.p_value,
                           "standard_error": res.standard_error})
