# tclkit/ingest.py
"""
Outage data ingestion: CSV readers, severe/normal weather classification,
SAIDI per (city, weather class), and assembly of estimation-ready observation
sets with a binarized protected attribute.

Inputs (UTF-8, header row, '.' decimals):
  cities.csv  city_id,customer_count,<attribute...>
  events.csv  city_id,start_utc,peak_wind_ms,max_pw_kgm2,hourly_counts   (counts ';'-separated)
Round-trip schema:
  observations.csv  treatment,outcome,x_1,...,x_d   (or named covariate columns)
"""
from __future__ import annotations
import enum, logging, math, pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from tclkit.core import ObservationSet, binarize_at_percentile, validate
from tclkit.errors import SchemaError, ValidationError

log = logging.getLogger(__name__)

CITY_KEY = "city_id"
CUSTOMER_COUNT = "customer_count"
EVENT_COLUMNS = ("city_id", "start_utc", "peak_wind_ms", "max_pw_kgm2", "hourly_counts")


class WeatherClass(str, enum.Enum):
    SEVERE = "severe"
    NORMAL = "normal"


@dataclass(frozen=True)
class OutageEvent:
    city_id: str
    start: pd.Timestamp
    hourly_out_counts: tuple[int, ...]
    peak_wind: float
    max_precipitable_water: float

    def __post_init__(self):
        counts = tuple(int(c) for c in self.hourly_out_counts)
        if not counts:
            raise ValidationError(f"outage event for {self.city_id!r} has no hourly counts")
        if min(counts) < 0:
            raise ValidationError(f"outage event for {self.city_id!r} has a negative hourly count")
        object.__setattr__(self, "hourly_out_counts", counts)

    @property
    def duration_hours(self) -> int:
        return len(self.hourly_out_counts)


@dataclass(frozen=True)
class CityRecord:
    city_id: str
    customer_count: int
    attributes: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.customer_count) < 1:
            raise ValidationError(f"city {self.city_id!r}: customer_count must be at least 1, got {self.customer_count}")
        object.__setattr__(self, "customer_count", int(self.customer_count))
        object.__setattr__(self, "attributes", {str(k): float(v) for k, v in self.attributes.items()})

    def value(self, name: str) -> float:
        """Attribute lookup; customer_count doubles as the TotalCustomer attribute."""
        if name == CUSTOMER_COUNT:
            return float(self.customer_count)
        try:
            return self.attributes[name]
        except KeyError:
            raise ValidationError(f"city {self.city_id!r} has no attribute {name!r}") from None


@dataclass(frozen=True)
class SaidiFilter:
    min_outage_rate: float = 0.001
    min_duration_hours: int = 2

    def keeps(self, event: OutageEvent, customers: int) -> bool:
        """Every hour above rate * M customers out, and strictly longer than the duration floor."""
        return (min(event.hourly_out_counts) > self.min_outage_rate * customers
                and event.duration_hours > self.min_duration_hours)


# --- weather / SAIDI ------------------------------------------------------

def classify_weather(event: OutageEvent, wind_threshold_ms: float = 19.0,
                     pw_threshold_kgm2: float = 16.0) -> WeatherClass:
    wind, pw = float(event.peak_wind), float(event.max_precipitable_water)
    if not (math.isfinite(wind) and math.isfinite(pw)):
        raise ValidationError(f"non-finite weather values for event in {event.city_id!r}: wind={wind}, pw={pw}")
    if wind > wind_threshold_ms or pw > pw_threshold_kgm2:
        return WeatherClass.SEVERE
    return WeatherClass.NORMAL


def saidi(events: Iterable[OutageEvent], customers: int, min_outage_rate: float = 0.001,
          min_duration_hours: int = 2) -> float:
    """Customer-minutes of interruption per customer over the qualifying events."""
    if int(customers) < 1:
        raise ValidationError(f"customer count must be at least 1, got {customers}")
    keep = SaidiFilter(min_outage_rate, min_duration_hours)
    total = sum(sum(e.hourly_out_counts) for e in events if keep.keeps(e, customers))
    return total / customers * 60.0


def saidi_table(cities: Sequence[CityRecord], events: Iterable[OutageEvent],
                min_outage_rate: float = 0.001, min_duration_hours: int = 2,
                wind_threshold_ms: float = 19.0, pw_threshold_kgm2: float = 16.0,
                threads: int = 1) -> dict[tuple[str, WeatherClass], float]:
    """SAIDI for every (city, weather class); cities without events get 0."""
    by_city = {c.city_id: c for c in cities}
    grouped: dict[tuple[str, WeatherClass], list[OutageEvent]] = {
        (c.city_id, w): [] for c in cities for w in WeatherClass
    }
    for e in events:
        if e.city_id not in by_city:
            raise ValidationError(f"outage event references unknown city {e.city_id!r}")
        grouped[(e.city_id, classify_weather(e, wind_threshold_ms, pw_threshold_kgm2))].append(e)

    keys = list(grouped)

    def one(key):
        return saidi(grouped[key], by_city[key[0]].customer_count, min_outage_rate, min_duration_hours)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, keys))
    else:
        values = [one(k) for k in keys]
    return dict(zip(keys, values))


def saidi_frame(table: Mapping[tuple[str, WeatherClass], float]) -> pd.DataFrame:
    rows = [{"city_id": cid, "weather_class": WeatherClass(w).value, "saidi_minutes": v}
            for (cid, w), v in table.items()]
    return pd.DataFrame(rows, columns=["city_id", "weather_class", "saidi_minutes"])


# --- observation assembly -------------------------------------------------

def _standardize(X: np.ndarray, names: list[str], label: str) -> tuple[np.ndarray, list[str]]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = std > 0
    for j in np.flatnonzero(~keep):
        log.warning("dropping constant covariate %r for %s weather", names[j], label)
    Z = (X[:, keep] - mean[keep]) / std[keep]
    return Z, [n for n, k in zip(names, keep) if k]


def assemble_observations(cities: Sequence[CityRecord],
                          saidi_by_class: Mapping[tuple[str, WeatherClass], float],
                          protected_attribute: str, percentile: float = 0.8) -> dict[WeatherClass, ObservationSet]:
    if not cities:
        raise ValidationError("no city records to assemble")
    names = list(cities[0].attributes)
    if protected_attribute != CUSTOMER_COUNT and protected_attribute not in names:
        raise ValidationError(f"protected attribute {protected_attribute!r} not found in city records")
    for c in cities:
        if set(c.attributes) != set(names):
            missing = sorted(set(names) - set(c.attributes)) or sorted(set(c.attributes) - set(names))
            raise ValidationError(f"city {c.city_id!r} attribute mismatch: {', '.join(missing)}")

    _, treatment = binarize_at_percentile([c.value(protected_attribute) for c in cities], percentile)
    covariate_names = [n for n in names if n != protected_attribute]
    X = np.array([[c.attributes[n] for n in covariate_names] for c in cities], dtype=float).reshape(
        len(cities), len(covariate_names))

    out: dict[WeatherClass, ObservationSet] = {}
    for w in WeatherClass:
        y = np.array([float(saidi_by_class.get((c.city_id, w), 0.0)) for c in cities])
        Z, kept = _standardize(X, covariate_names, w.value)
        obs = ObservationSet(Z, treatment.astype(float), y, tuple(kept))
        validate(obs)
        out[w] = obs
    log.info("assembled %d cities, %d covariates, %d treated on %r",
             len(cities), out[WeatherClass.SEVERE].d, int(treatment.sum()), protected_attribute)
    return out


# --- CSV readers / writers ------------------------------------------------

def _read_frame(path, required: Sequence[str]) -> pd.DataFrame:
    path = pathlib.Path(path)
    if not path.exists():
        raise SchemaError("file not found", str(path))
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise SchemaError("missing header row", str(path), 1) from None
    except pd.errors.ParserError as e:
        raise SchemaError(f"malformed CSV: {e}", str(path)) from e
    except UnicodeDecodeError as e:
        raise SchemaError(f"not valid UTF-8 at byte {e.start}", str(path)) from None
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}", str(path), 1)
    return df


def _number(raw: str, column: str, path, line: int) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise SchemaError(f"column {column!r}: not a number: {raw!r}", str(path), line) from None
    if not math.isfinite(v):
        raise SchemaError(f"column {column!r}: non-finite value {raw!r}", str(path), line)
    return v


def read_cities(path) -> list[CityRecord]:
    df = _read_frame(path, [CITY_KEY, CUSTOMER_COUNT])
    attrs = [c for c in df.columns if c not in (CITY_KEY, CUSTOMER_COUNT)]
    seen: set[str] = set()
    out = []
    for i, row in enumerate(df.itertuples(index=False)):
        line = i + 2
        rec = dict(zip(df.columns, row))
        cid = rec[CITY_KEY].strip()
        if not cid:
            raise SchemaError("empty city_id", str(path), line)
        if cid in seen:
            raise SchemaError(f"duplicate city_id {cid!r}", str(path), line)
        seen.add(cid)
        m = _number(rec[CUSTOMER_COUNT], CUSTOMER_COUNT, path, line)
        if m < 1 or m != int(m):
            raise SchemaError(f"customer_count must be a positive integer, got {rec[CUSTOMER_COUNT]!r}",
                              str(path), line)
        out.append(CityRecord(cid, int(m), {a: _number(rec[a], a, path, line) for a in attrs}))
    log.debug("read %d cities from %s", len(out), path)
    return out


def _counts(raw: str, path, line: int) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(";") if p.strip()]
    if not parts:
        raise SchemaError("hourly_counts is empty", str(path), line)
    try:
        counts = tuple(int(p) for p in parts)
    except ValueError:
        raise SchemaError(f"hourly_counts must be ';'-separated integers, got {raw!r}", str(path), line) from None
    if min(counts) < 0:
        raise SchemaError("hourly_counts must be non-negative", str(path), line)
    return counts


def read_events(path) -> list[OutageEvent]:
    df = _read_frame(path, EVENT_COLUMNS)
    out = []
    for i, row in enumerate(df.itertuples(index=False)):
        line = i + 2
        rec = dict(zip(df.columns, row))
        try:
            start = pd.Timestamp(rec["start_utc"])
        except ValueError:
            raise SchemaError(f"bad start_utc {rec['start_utc']!r}", str(path), line) from None
        if pd.isna(start):
            raise SchemaError("missing start_utc", str(path), line)
        start = start.tz_localize("UTC") if start.tzinfo is None else start.tz_convert("UTC")
        out.append(OutageEvent(
            city_id=rec["city_id"].strip(),
            start=start,
            hourly_out_counts=_counts(rec["hourly_counts"], path, line),
            peak_wind=_number(rec["peak_wind_ms"], "peak_wind_ms", path, line),
            max_precipitable_water=_number(rec["max_pw_kgm2"], "max_pw_kgm2", path, line),
        ))
    log.debug("read %d outage events from %s", len(out), path)
    return out


def observation_columns(obs: ObservationSet) -> list[str]:
    names = list(obs.columns) if obs.columns is not None else [f"x_{j + 1}" for j in range(obs.d)]
    return ["treatment", "outcome", *names]


def write_observations(path, obs: ObservationSet) -> None:
    """treatment,outcome,<covariates>; floats use the shortest round-trip repr."""
    validate(obs)
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([obs.treatment, obs.outcome, obs.covariates])
    frame = pd.DataFrame(data, columns=observation_columns(obs))
    frame["treatment"] = obs.treatment.astype(int)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_observations(path) -> ObservationSet:
    df = _read_frame(path, ["treatment", "outcome"])
    names = [c for c in df.columns if c not in ("treatment", "outcome")]
    if not names:
        raise SchemaError("no covariate columns", str(path), 1)
    if df.empty:
        raise SchemaError("no data rows", str(path), 2)
    ordered = ["treatment", "outcome", *names]
    values = np.empty((len(df), len(ordered)))
    for i, row in enumerate(df[ordered].itertuples(index=False)):
        line = i + 2
        values[i] = [_number(v, c, path, line) for c, v in zip(ordered, row)]
        if values[i, 0] not in (0.0, 1.0):
            raise SchemaError(f"non-binary treatment {row[0]!r}", str(path), line)
    generic = names == [f"x_{j + 1}" for j in range(len(names))]
    return ObservationSet(values[:, 2:], values[:, 0], values[:, 1], None if generic else tuple(names))
