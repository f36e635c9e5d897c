# tclkit/uq.py
"""Bootstrap uncertainty quantification of ACE estimates."""
from __future__ import annotations
import enum, logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tclkit.core import DomainPair, EstimateMethod, LinkKind
from tclkit.common import DEFAULTS
from tclkit.criteria import KernelConfig, make_grid, select_lambda_expanding
from tclkit.errors import BootstrapTrialError, TclError, ValidationError
from tclkit.estimators import correlation_estimate, ols_estimate, target_only_ace
from tclkit.glm import GlmFitConfig

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


def classify_verdict(median: float, band: float = 100.0) -> Verdict:
    """Same neutral band as quantize_ace: [-band, band] is neutral."""
    if median < -band:
        return Verdict.NEGATIVE
    if median > band:
        return Verdict.POSITIVE
    return Verdict.NEUTRAL


@dataclass(frozen=True, eq=False)
class BootstrapSummary:
    estimates: np.ndarray
    median: float
    quantile_05: float
    quantile_95: float
    verdict: Verdict
    boundary_flag_count: int = 0
    method: EstimateMethod = EstimateMethod.TCL
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "trials": int(self.estimates.size),
            "estimates": self.estimates.tolist(),
            "median": self.median,
            "quantile_05": self.quantile_05,
            "quantile_95": self.quantile_95,
            "verdict": self.verdict.value,
            "boundary_flag_count": self.boundary_flag_count,
        }
        if self.lambdas.size:
            out["lambdas"] = self.lambdas.tolist()
        return out


@dataclass(frozen=True)
class _TrialResult:
    value: float
    lam: float | None = None
    boundary: bool = False


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per (seed, trial); scheduling order does not matter."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def summarize(estimates: Sequence[float], band: float = 100.0,
              quantiles: tuple[float, float] = (0.05, 0.95)) -> tuple[float, float, float, Verdict]:
    est = np.asarray(estimates, dtype=float)
    median = float(np.median(est))
    lo, hi = (float(v) for v in np.quantile(est, quantiles, method="linear"))
    return median, lo, hi, classify_verdict(median, band)


def _run_trial(pair: DomainPair, method: EstimateMethod, trial: int, seed: int, criterion: str,
               grid: np.ndarray, config: GlmFitConfig, link: LinkKind, folds: int,
               kernel: KernelConfig | None, max_expansions: int) -> _TrialResult:
    rng = trial_rng(seed, trial)
    target = pair.target.take(rng.integers(0, pair.target.n, size=pair.target.n))
    if method is EstimateMethod.IPW:
        return _TrialResult(target_only_ace(target, link, config).value)
    if method is EstimateMethod.OLS:
        return _TrialResult(ols_estimate(target).value)
    if method is EstimateMethod.CORRELATION:
        return _TrialResult(correlation_estimate(target).value)
    source = pair.source.take(rng.integers(0, pair.source.n, size=pair.source.n))
    resampled = DomainPair(source, target)
    report = select_lambda_expanding(resampled, grid, [criterion], link, config,
                                     seed=int(rng.integers(0, 2**31 - 1)), folds=folds,
                                     kernel=kernel, max_expansions=max_expansions)
    lam = report.selected[criterion]
    return _TrialResult(report.estimate_at(lam), lam, report.boundary_flag)


def default_grid() -> np.ndarray:
    g = DEFAULTS["grid"]
    return make_grid(g["min"], g["max"], g["step"])


def bootstrap_ace(pair: DomainPair, method, trials: int, criterion: str = "mmd", grid=None,
                  seed: int = 0, config: GlmFitConfig | None = None,
                  link: LinkKind = LinkKind.SIGMOID, threads: int = 1, folds: int = 5,
                  kernel: KernelConfig | None = None, max_expansions: int = 3,
                  band: float = 100.0) -> BootstrapSummary:
    """Resample target (and source, for TCL) with replacement and rerun the full estimator per trial."""
    method = EstimateMethod(method)
    if trials < 1:
        raise ValidationError(f"bootstrap needs at least one trial, got {trials}")
    config = config or GlmFitConfig.default()
    link = LinkKind(link)
    grid = np.asarray(default_grid() if grid is None else grid, dtype=float)
    if method is EstimateMethod.TCL and grid.size == 0:
        raise ValidationError("empty lambda grid")

    def run(b: int) -> _TrialResult:
        try:
            return _run_trial(pair, method, b, seed, criterion, grid, config, link, folds, kernel, max_expansions)
        except TclError as e:
            raise BootstrapTrialError(b, e) from e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(b) for b in range(trials)]

    estimates = np.array([r.value for r in results])
    median, q05, q95, verdict = summarize(estimates, band)
    lambdas = np.array([r.lam for r in results], dtype=float) if method is EstimateMethod.TCL else np.empty(0)
    boundary = sum(r.boundary for r in results)
    if boundary:
        log.warning("%d of %d bootstrap trials selected lambda at a grid endpoint", boundary, trials)
    return BootstrapSummary(estimates, median, q05, q95, verdict, boundary, method, lambdas)
