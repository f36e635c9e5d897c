# tclkit/glm.py
"""
GLM propensity models: link functions g and their antiderivatives G, the
negative log-likelihood (1/n) sum[-a x'b + G(x'b)], and a first-order solver
shared with the l1 bias-correction stage.

Two optimizer presets exist:
  GlmFitConfig.default()  backtracking (Armijo) descent with step growth
  GlmFitConfig.paper()    20000 fixed steps, lr 0.001, x0.99 every 1000 steps
"""
from __future__ import annotations
import logging, math
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

from tclkit.core import LinkKind, ObservationSet, validate
from tclkit.errors import ConfigError, DimensionError, LinkDomainError, SeparationError

log = logging.getLogger(__name__)

BACKTRACK = 0.5
STEP_GROWTH = 1.25
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class GlmFitConfig:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-8
    step_size: float = 1.0
    clip_epsilon: float = 0.01
    line_search: bool = True
    decay_rate: float = 1.0
    decay_every: int = 1000
    divergence_bound: float = 1e3
    domain_margin: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be positive, got {self.max_iterations}")
        if not self.gradient_tolerance > 0:
            raise ConfigError(f"gradient_tolerance must be positive, got {self.gradient_tolerance}")
        if not self.step_size > 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if not 0.0 < self.clip_epsilon < 0.5:
            raise ConfigError(f"clip_epsilon must lie in (0, 0.5), got {self.clip_epsilon}")
        if not 0.0 < self.decay_rate <= 1.0 or self.decay_every < 1:
            raise ConfigError("decay_rate must lie in (0, 1] and decay_every must be positive")

    @classmethod
    def default(cls, **overrides) -> "GlmFitConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides) -> "GlmFitConfig":
        base = dict(max_iterations=20000, step_size=0.001, line_search=False,
                    decay_rate=0.99, decay_every=1000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "GlmFitConfig":
        cfg = dict(cfg or {})
        preset = str(cfg.pop("preset", "default")).lower()
        cfg.pop("link", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown glm setting(s): {', '.join(unknown)}")
        if preset == "paper":
            return cls.paper(**cfg)
        if preset == "default":
            return cls.default(**cfg)
        raise ConfigError(f"unknown glm preset {preset!r} (expected 'default' or 'paper')")

    def step_at(self, iteration: int) -> float:
        return self.step_size * self.decay_rate ** (iteration // self.decay_every)


@dataclass(frozen=True, eq=False)
class PropensityModel:
    link: LinkKind
    beta: np.ndarray
    converged: bool = True
    iterations: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "link", LinkKind(self.link))
        beta = np.array(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(beta)):
            raise SeparationError("non-finite propensity coefficients")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def d(self) -> int:
        return int(self.beta.size)


# --- link functions -------------------------------------------------------

def _domain(link: LinkKind) -> tuple[float, float]:
    if link is LinkKind.LINEAR:
        return 0.0, 1.0
    if link is LinkKind.EXPONENTIAL:
        return 0.0, math.inf
    return -math.inf, math.inf


def _check_domain(link: LinkKind, x: np.ndarray) -> None:
    lo, hi = _domain(link)
    bad = (x < lo) | (x > hi) | np.isnan(x)
    if np.any(bad):
        raise LinkDomainError(
            f"{link.value} link is defined on [{lo}, {hi}]; got {float(np.asarray(x)[bad].flat[0])}"
        )


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def link_eval(link: LinkKind, x):
    """g(x) for the three supported links."""
    link = LinkKind(link)
    arr = np.asarray(x, dtype=float)
    _check_domain(link, arr)
    return _scalar_or_array(x, _g(link, arr))


def link_antiderivative(link: LinkKind, x):
    """G(x) with G' = g and G(0) = 0."""
    link = LinkKind(link)
    arr = np.asarray(x, dtype=float)
    _check_domain(link, arr)
    return _scalar_or_array(x, _G(link, arr))


def _g(link: LinkKind, eta: np.ndarray) -> np.ndarray:
    if link is LinkKind.SIGMOID:
        return expit(eta)
    if link is LinkKind.EXPONENTIAL:
        return -np.expm1(-eta)
    return eta


def _G(link: LinkKind, eta: np.ndarray) -> np.ndarray:
    if link is LinkKind.SIGMOID:
        return np.logaddexp(0.0, eta)
    if link is LinkKind.EXPONENTIAL:
        return eta + np.expm1(-eta)
    return 0.5 * eta * eta


def project_index(link: LinkKind, eta: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    """Clip a linear index into the interior of the link's domain."""
    lo, hi = _domain(LinkKind(link))
    if math.isinf(lo) and math.isinf(hi):
        return eta
    return np.clip(eta, lo + margin, hi - margin if math.isfinite(hi) else math.inf)


# --- objective ------------------------------------------------------------

def negative_log_likelihood(beta, X, a, link: LinkKind, margin: float = 1e-6) -> float:
    eta = project_index(link, X @ beta, margin)
    return float(np.mean(-a * eta + _G(link, eta)))


def nll_gradient(beta, X, a, link: LinkKind, margin: float = 1e-6) -> np.ndarray:
    raw = X @ beta
    eta = project_index(link, raw, margin)
    lo, hi = _domain(LinkKind(link))
    # rows outside the domain sit on a flat piece of the clipped objective
    resid = np.where((raw >= lo) & (raw <= hi), _g(link, eta) - a, 0.0)
    return X.T @ resid / X.shape[0]


@dataclass
class DescentResult:
    x: np.ndarray
    converged: bool
    iterations: int
    history: list[float]


def descend(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: GlmFitConfig,
    prox: Callable[[np.ndarray, float], np.ndarray] | None = None,
    penalty: Callable[[np.ndarray], float] | None = None,
    divergence_bound: float | None = None,
) -> DescentResult:
    """(Proximal) gradient descent on objective + penalty.

    With line_search the step is backtracked until the composite sufficient
    decrease condition holds, so objective + penalty never increases; without
    it the fixed decaying schedule of the config is followed.
    Convergence is ||gradient mapping|| <= gradient_tolerance.
    """
    prox = prox or (lambda v, s: v)
    penalty = penalty or (lambda v: 0.0)
    x = np.array(x0, dtype=float)
    fx = objective(x)
    history = [fx + penalty(x)]
    step = config.step_size
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        g = gradient(x)
        if config.line_search:
            for _ in range(MAX_BACKTRACKS):
                x_new = prox(x - step * g, step)
                diff = x_new - x
                f_new = objective(x_new)
                if f_new <= fx + g @ diff + (diff @ diff) / (2.0 * step) + 1e-15 * abs(fx):
                    break
                step *= BACKTRACK
            else:
                # no acceptable step down to machine precision: x is as good as it gets
                log.debug("line search stalled at iteration %d", it)
                converged = float(np.linalg.norm(diff)) / step <= config.gradient_tolerance
                break
        else:
            step = config.step_at(it - 1)
            x_new = prox(x - step * g, step)
            diff = x_new - x
            f_new = objective(x_new)
        mapping_norm = float(np.linalg.norm(diff)) / step
        x, fx = x_new, f_new
        history.append(fx + penalty(x))
        if divergence_bound is not None and float(np.linalg.norm(x)) > divergence_bound:
            raise SeparationError(
                f"perfect separation: coefficient norm exceeded {divergence_bound:g} at iteration {it}"
            )
        if mapping_norm <= config.gradient_tolerance:
            converged = True
            break
        if config.line_search:
            step *= STEP_GROWTH
    return DescentResult(x=x, converged=converged, iterations=it, history=history)


def _design(obs) -> np.ndarray:
    return obs.covariates if isinstance(obs, ObservationSet) else np.asarray(obs, dtype=float)


def fit_glm(obs: ObservationSet, link: LinkKind, config: GlmFitConfig | None = None,
            beta0: np.ndarray | None = None) -> PropensityModel:
    """Maximum-likelihood GLM fit of treatment on covariates."""
    link = LinkKind(link)
    config = config or GlmFitConfig.default()
    validate(obs)
    X, a = obs.covariates, obs.treatment
    n, d = X.shape
    if n < d:
        log.warning("fitting %d coefficients on %d rows; the MLE may not be identified", d, n)
    if link is LinkKind.SIGMOID and (a.min() == a.max()):
        raise SeparationError("perfect separation: treatment vector has a single class")
    x0 = np.zeros(d) if beta0 is None else np.asarray(beta0, dtype=float)
    if x0.shape != (d,):
        raise DimensionError(f"dimension mismatch: initial beta has {x0.size} entries, data has {d} columns")
    m = config.domain_margin
    res = descend(
        lambda b: negative_log_likelihood(b, X, a, link, m),
        lambda b: nll_gradient(b, X, a, link, m),
        x0, config, divergence_bound=config.divergence_bound,
    )
    if link is LinkKind.SIGMOID and res.converged:
        eta = X @ res.x
        if eta[a == 1].min() > 0.0 and eta[a == 0].max() < 0.0:
            raise SeparationError("perfect separation: fitted index classifies every row; the MLE does not exist")
    if not res.converged:
        log.warning("%s GLM fit stopped after %d iterations without reaching tolerance %g",
                    link.value, res.iterations, config.gradient_tolerance)
    return PropensityModel(link, res.x, res.converged, res.iterations, tuple(res.history))


def predict_propensity(model: PropensityModel, obs, clip_epsilon: float = 0.01) -> np.ndarray:
    """g(x'beta) clipped to [clip_epsilon, 1 - clip_epsilon]."""
    if not 0.0 < clip_epsilon < 0.5:
        raise ConfigError(f"clip_epsilon must lie in (0, 0.5), got {clip_epsilon}")
    X = _design(obs)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DimensionError(
            f"dimension mismatch: model has {model.d} coefficients, data has {X.shape[-1]} columns"
        )
    eta = project_index(model.link, X @ model.beta, 0.0)
    return np.clip(_g(model.link, eta), clip_epsilon, 1.0 - clip_epsilon)
