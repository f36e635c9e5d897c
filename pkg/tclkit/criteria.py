# tclkit/criteria.py
"""
Hyperparameter selection for the l1 correction strength.

Balance criteria (in-sample, on the full target):
  mmd   unbiased MMD^2 between IPW-weighted treated and control covariates
  smd   mean |Cohen's d| over covariates of the same weighted sets
Nuisance-model criteria (propensity fit quality):
  l2, ce, auc            k-fold cross-validated on the target
  l2_in, ce_in, auc_in   in-sample on the full target
Every criterion is minimized except the two AUC variants.
"""
from __future__ import annotations
import enum, logging, math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist
from scipy.stats import rankdata

from tclkit.core import DomainPair, LinkKind, ObservationSet
from tclkit.errors import DimensionError, ValidationError
from tclkit.estimators import ipw_ace
from tclkit.glm import GlmFitConfig, PropensityModel, predict_propensity
from tclkit.tcl import bias_correct, rough_estimate

log = logging.getLogger(__name__)


class Criterion(str, enum.Enum):
    MMD = "mmd"
    SMD = "smd"
    L2 = "l2"
    CE = "ce"
    AUC = "auc"
    L2_IN = "l2_in"
    CE_IN = "ce_in"
    AUC_IN = "auc_in"

    @property
    def maximize(self) -> bool:
        return self in (Criterion.AUC, Criterion.AUC_IN)

    @property
    def cross_validated(self) -> bool:
        return self in (Criterion.L2, Criterion.CE, Criterion.AUC)


class Metric(str, enum.Enum):
    L2 = "l2"
    CE = "ce"
    AUC = "auc"


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian RBF k(x, y) = exp(-||x - y||^2 / r^2); bandwidth None means median heuristic."""

    bandwidth: float | None = None
    kind: str = "gaussian_rbf"

    def __post_init__(self):
        if self.kind != "gaussian_rbf":
            raise ValidationError(f"unsupported kernel {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValidationError(f"kernel bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True, eq=False)
class WeightedCovariateSets:
    treated: np.ndarray
    control: np.ndarray


@dataclass(frozen=True, eq=False)
class CriterionReport:
    lambda_grid: np.ndarray
    criteria: tuple[Criterion, ...]
    values: np.ndarray
    selected: dict[str, float]
    estimates: np.ndarray
    boundary: dict[str, bool] = field(default_factory=dict)
    bandwidth: float | None = None
    expansions: int = 0

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValidationError("lambda grid must be strictly ascending")
        if self.values.shape != (grid.size, len(self.criteria)):
            raise DimensionError(f"criterion matrix {self.values.shape} does not match grid x criteria")

    @property
    def boundary_flag(self) -> bool:
        return any(self.boundary.values())

    def column(self, criterion) -> np.ndarray:
        return self.values[:, self.criteria.index(Criterion(criterion))]

    def estimate_at(self, lam: float) -> float:
        return float(self.estimates[int(np.flatnonzero(self.lambda_grid == lam)[0])])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"lambda": self.lambda_grid, "tau": self.estimates})
        for j, c in enumerate(self.criteria):
            frame[c.value] = self.values[:, j]
            frame[f"{c.value}_selected"] = self.lambda_grid == self.selected[c.value]
        frame["boundary"] = self.boundary_flag
        return frame


# --- distances and balance ----------------------------------------------

def _as_points(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def rbf_kernel(A: np.ndarray, B: np.ndarray, bandwidth: float) -> np.ndarray:
    if math.isinf(bandwidth):
        return np.ones((A.shape[0], B.shape[0]))
    return np.exp(-cdist(A, B, "sqeuclidean") / bandwidth**2)


def median_heuristic_bandwidth(pooled) -> float:
    """Median pairwise distance; mean if that is 0; 1 if both are 0."""
    X = _as_points(pooled)
    if X.shape[0] < 2:
        raise ValidationError("median heuristic needs at least two points")
    dists = pdist(X, "euclidean")
    med = float(np.median(dists))
    if med > 0:
        return med
    mean = float(dists.mean())
    return mean if mean > 0 else 1.0


def mmd_unbiased(a_set, b_set, kernel: KernelConfig | None = None) -> float:
    """U-statistic MMD^2; may be negative."""
    kernel = kernel or KernelConfig()
    A, B = _as_points(a_set), _as_points(b_set)
    m, n = A.shape[0], B.shape[0]
    if m < 2 or n < 2:
        raise ValidationError(f"MMD needs at least two points per set, got {m} and {n}")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    r = kernel.bandwidth if kernel.bandwidth is not None else median_heuristic_bandwidth(np.vstack([A, B]))
    Kaa, Kbb, Kab = rbf_kernel(A, A, r), rbf_kernel(B, B, r), rbf_kernel(A, B, r)
    term_a = (Kaa.sum() - np.trace(Kaa)) / (m * (m - 1))
    term_b = (Kbb.sum() - np.trace(Kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * Kab.mean())


def cohens_d(a, b) -> float:
    """(mean_a - mean_b) / sqrt((S_a + S_b) / 2) with biased (1/m, 1/n) variances S."""
    x = np.asarray(a, dtype=float).ravel()
    y = np.asarray(b, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValidationError("Cohen's d needs two non-empty samples")
    pooled = (x.var() + y.var()) / 2.0
    if pooled <= 0.0:
        raise ValidationError("Cohen's d undefined: zero pooled variance")
    return float((x.mean() - y.mean()) / math.sqrt(pooled))


def weighted_covariate_sets(obs: ObservationSet, propensities) -> WeightedCovariateSets:
    """Treated rows scaled by 1/e, control rows by 1/(1 - e)."""
    e = np.asarray(propensities, dtype=float).ravel()
    if e.size != obs.n:
        raise DimensionError(f"dimension mismatch: {e.size} propensities for {obs.n} rows")
    t = obs.treatment == 1
    X = obs.covariates
    return WeightedCovariateSets(treated=X[t] / e[t, None], control=X[~t] / (1.0 - e[~t, None]))


def smd(sets: WeightedCovariateSets) -> float:
    T, C = _as_points(sets.treated), _as_points(sets.control)
    if T.shape[0] == 0 or C.shape[0] == 0:
        raise ValidationError("SMD needs non-empty treated and control sets")
    total = 0.0
    for j in range(T.shape[1]):
        try:
            total += abs(cohens_d(T[:, j], C[:, j]))
        except ValidationError as e:
            raise ValidationError(f"covariate {j}: {e}") from e
    return total / T.shape[1]


# --- nuisance-model metrics ----------------------------------------------

def _paired(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.size != p.size:
        raise DimensionError(f"length mismatch: {a.size} labels vs {p.size} predictions")
    return a, p


def l2_err(actual, predicted) -> float:
    a, p = _paired(actual, predicted)
    return float(np.mean((a - p) ** 2))


def ce_err(actual, predicted, clip: float = 1e-6) -> float:
    if not 0.0 < clip < 0.5:
        raise ValidationError(f"clip must lie in (0, 0.5), got {clip}")
    a, p = _paired(actual, predicted)
    p = np.clip(p, clip, 1.0 - clip)
    return float(-np.mean(a * np.log(p) + (1.0 - a) * np.log1p(-p)))


def auc(actual, scores) -> float:
    """Mann-Whitney AUC; ties count one half."""
    a, s = _paired(actual, scores)
    pos = int((a == 1).sum())
    neg = int((a == 0).sum())
    if pos == 0 or neg == 0:
        raise ValidationError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s)
    return float((ranks[a == 1].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def _metric(metric: Metric, actual, predicted, clip: float) -> float:
    if metric is Metric.L2:
        return l2_err(actual, predicted)
    if metric is Metric.CE:
        return ce_err(actual, predicted, clip)
    return auc(actual, predicted)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if folds < 2:
        raise ValidationError(f"cross-validation needs at least 2 folds, got {folds}")
    if n < folds:
        raise ValidationError(f"cannot split {n} rows into {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, folds)


def _cv_predictions(target: ObservationSet, rough: PropensityModel, lam: float, folds: int,
                    config: GlmFitConfig, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    all_rows = np.arange(target.n)
    for held in fold_indices(target.n, folds, seed):
        train = target.take(np.setdiff1d(all_rows, held))
        fit = bias_correct(train, rough, lam, config)
        test = target.take(held)
        out.append((test.treatment, predict_propensity(fit.corrected_model(), test, config.clip_epsilon)))
    return out


def _fold_average(preds, metric: Metric, clip: float) -> float:
    vals = []
    for k, (a, p) in enumerate(preds):
        try:
            vals.append(_metric(metric, a, p, clip))
        except ValidationError as e:
            raise ValidationError(f"fold {k}: {e}") from e
    return float(np.mean(vals))


def cross_validated_metric(target: ObservationSet, rough: PropensityModel, lam: float, folds: int,
                           metric, config: GlmFitConfig | None = None, seed: int = 0) -> float:
    config = config or GlmFitConfig.default()
    preds = _cv_predictions(target, rough, lam, folds, config, seed)
    return _fold_average(preds, Metric(metric), config.clip_epsilon)


# --- grid search ---------------------------------------------------------

def make_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValidationError(f"grid step must be positive, got {step}")
    if lo < 0 or hi < lo:
        raise ValidationError(f"invalid grid bounds [{lo}, {hi}]")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


def expand_grid(grid: np.ndarray, side: str) -> np.ndarray:
    """Double the range on one side ('upper' or 'lower'), keeping the spacing."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return grid
    step = float(grid[1] - grid[0])
    lo, hi = float(grid[0]), float(grid[-1])
    if side == "upper":
        return make_grid(lo, lo + 2.0 * (hi - lo), step)
    # snap onto the existing lattice so old grid points are reused
    k = min(grid.size - 1, math.floor(lo / step + 1e-9))
    return make_grid(max(0.0, round(lo - step * k, 12)), hi, step)


class _GridEvaluator:
    """Evaluates criteria at single lambdas for one domain pair; memoizes by lambda."""

    def __init__(self, pair: DomainPair, criteria: Sequence[Criterion], link: LinkKind,
                 config: GlmFitConfig, seed: int, folds: int, kernel: KernelConfig | None,
                 rough: PropensityModel | None = None):
        self.pair, self.criteria, self.config = pair, tuple(criteria), config
        self.seed, self.folds = seed, folds
        self.rough = rough if rough is not None else rough_estimate(pair.source, link, config)
        self.bandwidth = None
        if any(c in (Criterion.MMD,) for c in self.criteria):
            if kernel is not None and kernel.bandwidth is not None:
                self.bandwidth = kernel.bandwidth
            else:
                # fixed across the grid: the anchor model's weighted sets
                e0 = predict_propensity(self.rough, pair.target, config.clip_epsilon)
                sets = weighted_covariate_sets(pair.target, e0)
                self.bandwidth = median_heuristic_bandwidth(np.vstack([sets.treated, sets.control]))
        self.cache: dict[float, tuple[np.ndarray, float]] = {}

    def __call__(self, lam: float) -> tuple[np.ndarray, float]:
        key = float(lam)
        if key in self.cache:
            return self.cache[key]
        target, cfg = self.pair.target, self.config
        fit = bias_correct(target, self.rough, lam, cfg)
        e = predict_propensity(fit.corrected_model(), target, cfg.clip_epsilon)
        tau = ipw_ace(target, e).value
        sets = weighted_covariate_sets(target, e)
        cv_preds = None
        row = np.empty(len(self.criteria))
        for j, c in enumerate(self.criteria):
            if c is Criterion.MMD:
                row[j] = mmd_unbiased(sets.treated, sets.control, KernelConfig(self.bandwidth))
            elif c is Criterion.SMD:
                row[j] = smd(sets)
            elif c.cross_validated:
                if cv_preds is None:
                    cv_preds = _cv_predictions(target, self.rough, lam, self.folds, cfg, self.seed)
                row[j] = _fold_average(cv_preds, Metric(c.value), cfg.clip_epsilon)
            else:
                row[j] = _metric(Metric(c.value.removesuffix("_in")), target.treatment, e, cfg.clip_epsilon)
        self.cache[key] = (row, tau)
        return row, tau

    def report(self, grid: np.ndarray, threads: int = 1, expansions: int = 0) -> CriterionReport:
        grid = np.asarray(grid, dtype=float)
        if grid.size == 0:
            raise ValidationError("empty lambda grid")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValidationError("lambda grid must be strictly ascending")
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(self, grid))
        else:
            results = [self(lam) for lam in grid]
        values = np.vstack([r[0] for r in results]) if results else np.empty((0, len(self.criteria)))
        estimates = np.array([r[1] for r in results])
        selected, boundary = {}, {}
        for j, c in enumerate(self.criteria):
            col = values[:, j]
            if np.all(np.isnan(col)):
                raise ValidationError(f"criterion {c.value} is undefined on the whole grid")
            # first occurrence of the optimum == smallest lambda on ties
            k = int(np.nanargmax(col) if c.maximize else np.nanargmin(col))
            selected[c.value] = float(grid[k])
            boundary[c.value] = k == 0 or k == grid.size - 1
        return CriterionReport(grid, self.criteria, values, selected, estimates,
                               boundary, self.bandwidth, expansions)


def _criteria(criteria: Iterable) -> tuple[Criterion, ...]:
    out = tuple(Criterion(c) for c in criteria)
    if not out:
        raise ValidationError("no selection criteria requested")
    return out


def select_lambda(pair: DomainPair, grid, criteria: Iterable = ("mmd",), link: LinkKind = LinkKind.SIGMOID,
                  config: GlmFitConfig | None = None, seed: int = 0, folds: int = 5,
                  kernel: KernelConfig | None = None, threads: int = 1,
                  rough: PropensityModel | None = None) -> CriterionReport:
    """Evaluate every criterion at every grid lambda and pick the best per criterion."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty lambda grid")
    ev = _GridEvaluator(pair, _criteria(criteria), LinkKind(link), config or GlmFitConfig.default(),
                        seed, folds, kernel, rough)
    report = ev.report(grid, threads)
    if report.boundary_flag:
        log.warning("lambda selection hit a grid endpoint for: %s",
                    ", ".join(k for k, v in report.boundary.items() if v))
    return report


def select_lambda_expanding(pair: DomainPair, grid, criteria: Iterable = ("mmd",),
                            link: LinkKind = LinkKind.SIGMOID, config: GlmFitConfig | None = None,
                            seed: int = 0, folds: int = 5, kernel: KernelConfig | None = None,
                            threads: int = 1, max_expansions: int = 3,
                            rough: PropensityModel | None = None) -> CriterionReport:
    """select_lambda, widening the grid on whichever side a criterion lands on, up to max_expansions times."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty lambda grid")
    ev = _GridEvaluator(pair, _criteria(criteria), LinkKind(link), config or GlmFitConfig.default(),
                        seed, folds, kernel, rough)
    report = ev.report(grid, threads)
    expansions = 0
    while report.boundary_flag and expansions < max_expansions and grid.size > 1:
        picks = set(report.selected.values())
        lo, hi = float(grid[0]), float(grid[-1])
        if hi in picks:
            hi = float(expand_grid(grid, "upper")[-1])
        if lo in picks and lo > 0:
            lo = float(expand_grid(grid, "lower")[0])
        new = make_grid(lo, hi, float(grid[1] - grid[0]))
        if new.size == grid.size:
            break
        grid = new
        expansions += 1
        log.info("expanded lambda grid to [%g, %g] (%d points)", grid[0], grid[-1], grid.size)
        report = ev.report(grid, threads, expansions)
    if report.boundary_flag:
        log.warning("lambda selection still at a grid endpoint after %d expansion(s): %s", expansions,
                    ", ".join(k for k, v in report.boundary.items() if v))
    return report
