import math

import numpy as np
import pandas as pd
import pytest

from tclkit.core import ObservationSet
from tclkit.errors import SchemaError, ValidationError
from tclkit.ingest import (CityRecord, OutageEvent, WeatherClass, assemble_observations, classify_weather,
                           read_cities, read_events, read_observations, saidi, saidi_frame, saidi_table,
                           write_observations)

T0 = pd.Timestamp("2021-06-01T12:00:00Z")


def event(counts, wind=5.0, pw=5.0, city="c1"):
    return OutageEvent(city, T0, tuple(counts), wind, pw)


@pytest.mark.parametrize("wind, pw, expected", [
    (20.0, 5.0, WeatherClass.SEVERE), (10.0, 17.0, WeatherClass.SEVERE),
    (10.0, 10.0, WeatherClass.NORMAL), (19.0, 16.0, WeatherClass.NORMAL),
])
def test_classify_weather(wind, pw, expected):
    assert classify_weather(event([1], wind, pw)) is expected


def test_classify_rejects_non_finite():
    with pytest.raises(ValidationError):
        classify_weather(event([1], math.nan, 1.0))


def test_saidi_hand_cases():
    assert saidi([event([50, 30, 0])], 100) == 0.0
    assert saidi([event([50, 30, 20])], 100) == pytest.approx(60.0)
    assert saidi([], 100) == 0.0
    assert saidi([event([50, 30])], 100) == 0.0


def test_saidi_rejects_zero_customers():
    with pytest.raises(ValidationError):
        saidi([], 0)


def test_saidi_additive_and_inverse_in_customers():
    e1 = [event([5, 6, 7]), event([9, 9, 9, 9])]
    e2 = [event([3, 4, 5, 6])]
    assert saidi(e1 + e2, 200) == pytest.approx(saidi(e1, 200) + saidi(e2, 200))
    assert saidi(e1, 400) == pytest.approx(saidi(e1, 200) / 2)


def test_event_validation():
    with pytest.raises(ValidationError):
        event([])
    with pytest.raises(ValidationError):
        event([1, -1, 2])
    with pytest.raises(ValidationError):
        CityRecord("c1", 0)


def test_saidi_table_routes_by_weather():
    cities = [CityRecord("c1", 100), CityRecord("c2", 50)]
    events = [event([50, 30, 20]), event([10, 10, 10], wind=25.0)]
    table = saidi_table(cities, events)
    assert table[("c1", WeatherClass.NORMAL)] == pytest.approx(60.0)
    assert table[("c1", WeatherClass.SEVERE)] == pytest.approx(18.0)
    assert table[("c2", WeatherClass.NORMAL)] == 0.0
    frame = saidi_frame(table)
    assert list(frame.columns) == ["city_id", "weather_class", "saidi_minutes"]
    assert len(frame) == 4


def test_saidi_table_unknown_city():
    with pytest.raises(ValidationError, match="unknown city"):
        saidi_table([CityRecord("c1", 10)], [event([5, 5, 5], city="zz")])


def _cities(n=5):
    rng = np.random.default_rng(0)
    return [CityRecord(f"c{i}", 100 + i, {"income": 10.0 * (i + 1), "age": rng.normal(), "forest": rng.random()})
            for i in range(n)]


def test_assemble_one_treated_city_at_80th_percentile():
    obs = assemble_observations(_cities(), {}, "income", 0.8)
    for w in WeatherClass:
        assert obs[w].treatment.tolist() == [0, 0, 0, 0, 1]
        assert obs[w].columns == ("age", "forest")


def test_assemble_missing_saidi_defaults_to_zero():
    obs = assemble_observations(_cities(), {("c2", WeatherClass.NORMAL): 12.5}, "income")
    assert obs[WeatherClass.SEVERE].outcome.tolist() == [0.0] * 5
    assert obs[WeatherClass.NORMAL].outcome[2] == 12.5


def test_assemble_rejects_unknown_protected_attribute():
    with pytest.raises(ValidationError, match="education"):
        assemble_observations(_cities(), {}, "education")


def test_assemble_standardizes_covariates():
    obs = assemble_observations(_cities(30), {}, "income")[WeatherClass.SEVERE]
    assert np.all(np.abs(obs.covariates.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(obs.covariates.var(axis=0) - 1.0) < 1e-6)


def test_assemble_drops_constant_column(caplog):
    cities = [CityRecord(c.city_id, c.customer_count, {**c.attributes, "flat": 1.0}) for c in _cities()]
    with caplog.at_level("WARNING"):
        obs = assemble_observations(cities, {}, "income")
    assert "flat" not in obs[WeatherClass.NORMAL].columns
    assert any("flat" in r.getMessage() for r in caplog.records)


def test_customer_count_as_protected_attribute():
    obs = assemble_observations(_cities(), {}, "customer_count")
    assert obs[WeatherClass.NORMAL].treatment.tolist() == [0, 0, 0, 0, 1]
    assert obs[WeatherClass.NORMAL].d == 3


def test_read_cities(tmp_path):
    p = tmp_path / "cities.csv"
    p.write_text("city_id,customer_count,income,age\nc1,100,5.5,40\nc2,250,7.0,35\n", encoding="utf-8")
    cities = read_cities(p)
    assert [c.city_id for c in cities] == ["c1", "c2"]
    assert cities[1].customer_count == 250
    assert cities[0].attributes == {"income": 5.5, "age": 40.0}


@pytest.mark.parametrize("body, line", [
    ("c1,100,5.5\nc2,abc,1.0\n", 3),
    ("c1,100,5.5\nc1,100,1.0\n", 3),
    ("c1,0,5.5\n", 2),
    ("c1,100,\n", 2),
])
def test_read_cities_schema_errors_carry_line(tmp_path, body, line):
    p = tmp_path / "cities.csv"
    p.write_text("city_id,customer_count,income\n" + body, encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        read_cities(p)
    assert info.value.line == line
    assert f"cities.csv:{line}:" in str(info.value)


def test_read_cities_missing_column(tmp_path):
    p = tmp_path / "cities.csv"
    p.write_text("city_id,income\nc1,1\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="customer_count"):
        read_cities(p)


def test_read_events(tmp_path):
    p = tmp_path / "events.csv"
    p.write_text("city_id,start_utc,peak_wind_ms,max_pw_kgm2,hourly_counts\n"
                 "c1,2021-06-01T12:00:00Z,20.5,3.0,50;30;20\n"
                 "c2,2021-06-02 01:00,4,17,7\n", encoding="utf-8")
    events = read_events(p)
    assert events[0].hourly_out_counts == (50, 30, 20)
    assert events[0].start == T0
    assert str(events[1].start.tz) == "UTC"
    assert classify_weather(events[1]) is WeatherClass.SEVERE


def test_read_events_bad_counts(tmp_path):
    p = tmp_path / "events.csv"
    p.write_text("city_id,start_utc,peak_wind_ms,max_pw_kgm2,hourly_counts\n"
                 "c1,2021-06-01T12:00:00Z,1,1,5;x\n", encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        read_events(p)
    assert info.value.line == 2


def test_read_events_header_only(tmp_path):
    p = tmp_path / "events.csv"
    p.write_text("city_id,start_utc,peak_wind_ms,max_pw_kgm2,hourly_counts\n", encoding="utf-8")
    assert read_events(p) == []


def test_observations_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    obs = ObservationSet(rng.normal(size=(6, 3)), [0, 1, 1, 0, 1, 0], rng.normal(size=6))
    path = tmp_path / "obs.csv"
    write_observations(path, obs)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "treatment,outcome,x_1,x_2,x_3"
    back = read_observations(path)
    assert np.array_equal(back.covariates, obs.covariates)
    assert np.array_equal(back.outcome, obs.outcome)
    assert back.columns is None


def test_observations_keep_column_names(tmp_path):
    obs = ObservationSet(np.eye(2), [0, 1], [1.0, 2.0], ("age", "forest"))
    path = tmp_path / "obs.csv"
    write_observations(path, obs)
    assert read_observations(path).columns == ("age", "forest")


def test_read_observations_rejects_non_binary(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("treatment,outcome,x_1\n1,2.0,0\n3,1.0,0\n", encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        read_observations(path)
    assert info.value.line == 3
