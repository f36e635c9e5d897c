# tclkit/core.py
"""
Domain types shared by every stage: observation sets, domain pairs, link kinds,
causal estimates, plus validation, percentile binarization, subgroup split and
the ACE quantization used in result tables.
"""
from __future__ import annotations
import enum, logging, math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tclkit.errors import DimensionError, ValidationError

log = logging.getLogger(__name__)


class LinkKind(str, enum.Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    EXPONENTIAL = "exponential"


class EstimateMethod(str, enum.Enum):
    CORRELATION = "correlation"
    OLS = "ols"
    IPW = "ipw"
    TCL = "tcl"


def _frozen(a, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Covariates X (n x d), binary treatment A and outcome Y for one domain.

    Arrays are copied and made read-only on construction; call `validate` to
    check the invariants (constructors in sim/ingest always do).
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", _frozen(self.covariates, ndim=2))
        object.__setattr__(self, "treatment", _frozen(self.treatment))
        object.__setattr__(self, "outcome", _frozen(self.outcome))
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))

    @property
    def n(self) -> int:
        return int(self.covariates.shape[0])

    @property
    def d(self) -> int:
        return int(self.covariates.shape[1]) if self.covariates.ndim == 2 else 0

    @property
    def treated_fraction(self) -> float:
        return float(self.treatment.mean()) if self.treatment.size else float("nan")

    def take(self, rows) -> "ObservationSet":
        rows = np.asarray(rows, dtype=int)
        return ObservationSet(self.covariates[rows], self.treatment[rows], self.outcome[rows], self.columns)

    def with_outcome(self, outcome) -> "ObservationSet":
        return ObservationSet(self.covariates, self.treatment, outcome, self.columns)


@dataclass(frozen=True)
class DomainPair:
    source: ObservationSet
    target: ObservationSet

    def __post_init__(self):
        if self.source.n == 0 or self.target.n == 0:
            raise ValidationError("domain pair needs non-empty source and target sets")
        if self.source.d != self.target.d:
            raise DimensionError(
                f"dimension mismatch: source has {self.source.d} columns, target has {self.target.d}"
            )

    @property
    def d(self) -> int:
        return self.target.d

    def pooled(self) -> ObservationSet:
        return ObservationSet(
            np.vstack([self.source.covariates, self.target.covariates]),
            np.concatenate([self.source.treatment, self.target.treatment]),
            np.concatenate([self.source.outcome, self.target.outcome]),
            self.target.columns,
        )


@dataclass(frozen=True)
class CausalEstimate:
    value: float
    method: EstimateMethod
    domain_label: str = "target"
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "method", EstimateMethod(self.method))
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValidationError(f"non-finite {self.method.value} estimate for {self.domain_label!r}")


def validate(obs: ObservationSet) -> None:
    """Raise ValidationError (with row/column) unless every invariant holds."""
    X, a, y = obs.covariates, obs.treatment, obs.outcome
    if X.ndim != 2:
        raise DimensionError(f"dimension mismatch: covariates must be a matrix, got {X.ndim} dims")
    n = X.shape[0]
    if n < 1:
        raise ValidationError("empty observation set")
    if a.shape != (n,) or y.shape != (n,):
        raise DimensionError(
            f"dimension mismatch: covariates have {n} rows, treatment {a.shape[0]}, outcome {y.shape[0]}"
        )
    if obs.columns is not None and len(obs.columns) != X.shape[1]:
        raise DimensionError(f"dimension mismatch: {len(obs.columns)} column names for {X.shape[1]} columns")
    bad = np.flatnonzero((a != 0) & (a != 1))
    if bad.size:
        raise ValidationError(f"non-binary treatment at row {int(bad[0])}")
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ValidationError(f"non-finite outcome at row {int(bad[0])}")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise ValidationError(f"non-finite covariate at row {i}, column {j}")


def binarize_at_percentile(values: Sequence[float], percentile: float) -> tuple[float, np.ndarray]:
    """Nearest-rank percentile threshold and the strict exceedance indicator."""
    if not 0.0 < percentile < 1.0:
        raise ValidationError(f"percentile must lie in (0, 1), got {percentile}")
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValidationError("cannot binarize an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"non-finite value at index {int(np.flatnonzero(~np.isfinite(v))[0])}")
    # round before ceil so 0.7 * 10 lands on rank 7, not 8
    rank = max(1, math.ceil(round(percentile * v.size, 9)))
    threshold = float(np.sort(v)[rank - 1])
    return threshold, (v > threshold).astype(np.int8)


def split_subgroups(obs: ObservationSet, column: int) -> DomainPair:
    """Rows with X[:, column] == 0 become the source, == 1 the target; the column is dropped."""
    if not 0 <= column < obs.d:
        raise DimensionError(f"split column {column} out of range for {obs.d} columns")
    col = obs.covariates[:, column]
    bad = np.flatnonzero((col != 0) & (col != 1))
    if bad.size:
        raise ValidationError(f"non-binary splitting column {column} at row {int(bad[0])}")
    src_rows, tgt_rows = np.flatnonzero(col == 0), np.flatnonzero(col == 1)
    if tgt_rows.size == 0:
        raise ValidationError("empty target subgroup")
    if src_rows.size == 0:
        raise ValidationError("empty source subgroup")
    keep = [j for j in range(obs.d) if j != column]
    columns = tuple(obs.columns[j] for j in keep) if obs.columns is not None else None

    def part(rows):
        return ObservationSet(obs.covariates[np.ix_(rows, keep)], obs.treatment[rows], obs.outcome[rows], columns)

    return DomainPair(source=part(src_rows), target=part(tgt_rows))


def quantize_ace(tau: float, band: float = 100.0, strong: float = 500.0) -> str:
    """Table symbol: '--' (<= -500), '-' (< -100), '*' (within +-100), '+' (> 100)."""
    if not math.isfinite(tau):
        raise ValidationError(f"cannot quantize non-finite ACE {tau}")
    if tau <= -strong:
        return "--"
    if tau < -band:
        return "-"
    if tau <= band:
        return "*"
    return "+"
