import json

import numpy as np
import pandas as pd
import pytest

from tclkit.cli import main
from tclkit.common import read_csv_report, read_json

SMALL = ["--d", "5", "--s", "1", "--n-target", "60", "--n-source", "200", "--index-offset", "0.3",
         "--index-mode", "absolute", "--coefficient-scale", "0.3"]
FAST_GRID = ["--grid-min", "0", "--grid-max", "0.02", "--grid-step", "0.01", "--folds", "3"]


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--seed", "5", "--out", str(out), *SMALL]) == 0
    return out


def test_simulate_paper_preset(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--seed", "7", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"observations_source.csv", "observations_target.csv", "truth.json"}
    assert len(pd.read_csv(out / "observations_target.csv")) == 100
    truth = read_json(out / "truth.json")
    assert truth["config"]["seed"] == 7
    assert truth["manifest"]["command"] == "simulate"


def test_simulate_zero_sparsity(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--s", "0", "--out", str(out), "--d", "4"]) == 0
    truth = read_json(out / "truth.json")
    assert truth["beta_source"] == truth["beta_target"]


def test_simulate_literal_preset_drops_offset(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--preset", "literal", "--out", str(out), *SMALL[:2]]) == 0
    config = read_json(out / "truth.json")["config"]
    assert config["index_offset"] == 0.0 and config["center_index"] is False


def test_simulate_same_seed_is_byte_identical(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["simulate", "--seed", "7", "--out", str(out), *SMALL]) == 0
    for name in ("observations_source.csv", "observations_target.csv", "truth.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert read_json(outs[0] / "truth.json")["manifest"]["timestamp"] is None


def test_simulate_requires_out():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 2


def test_estimate_ipw_hand_case(tmp_path, capsys):
    csv = tmp_path / "obs.csv"
    csv.write_text("treatment,outcome,x_1\n1,2.0,0\n0,4.0,0\n", encoding="utf-8")
    rc = main(["estimate", "--method", "ipw", "--source-csv", str(csv), "--target-csv", str(csv)])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["tau"] == pytest.approx(-2.0)
    assert payload["method"] == "ipw" and payload["quantized"] == "*"


def test_estimate_unknown_method(sim_dir):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--method", "magic", "--data", str(sim_dir)])
    assert info.value.code == 2


def test_estimate_tcl_auto(sim_dir, tmp_path):
    out = tmp_path / "tcl.json"
    rc = main(["estimate", "--method", "tcl", "--data", str(sim_dir), "--criterion", "l2_in", "--out", str(out),
               *FAST_GRID])
    assert rc == 0
    payload = read_json(out)
    assert {"tau", "quantized", "lambda_selected", "support", "boundary"} <= set(payload)
    assert np.isfinite(payload["tau"])
    assert payload["criterion"] == "l2_in"


def test_estimate_tcl_fixed_lambda(sim_dir, tmp_path):
    out = tmp_path / "tcl.json"
    assert main(["estimate", "--method", "tcl", "--lambda", "0.05", "--data", str(sim_dir), "--out", str(out)]) == 0
    payload = read_json(out)
    assert payload["lambda_selected"] == 0.05
    assert "criterion" not in payload


def test_estimate_missing_data_dir(tmp_path, capsys):
    rc = main(["estimate", "--method", "ipw", "--data", str(tmp_path / "nope")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: schema:")


def test_select_lambda_csv(sim_dir, tmp_path):
    out = tmp_path / "sel.csv"
    rc = main(["select-lambda", "--data", str(sim_dir), "--criteria", "mmd,l2,auc_in", "--out", str(out),
               *FAST_GRID])
    assert rc == 0
    manifest, frame = read_csv_report(out)
    assert manifest["command"] == "select-lambda"
    assert frame["lambda"].tolist() == pytest.approx([0.0, 0.01, 0.02])
    for c in ("mmd", "l2", "auc_in"):
        assert c in frame.columns
        assert frame[f"{c}_selected"].astype(bool).sum() == 1


def test_select_lambda_single_point_grid_flags_boundary(sim_dir, tmp_path, caplog):
    out = tmp_path / "sel.csv"
    rc = main(["select-lambda", "--data", str(sim_dir), "--criteria", "mmd", "--out", str(out),
               "--grid-min", "0.01", "--grid-max", "0.01", "--grid-step", "0.01"])
    assert rc == 0
    _, frame = read_csv_report(out)
    assert len(frame) == 1
    assert frame["boundary"].astype(bool).all()
    assert any("grid endpoint" in r.getMessage() for r in caplog.records)


def test_bootstrap_single_trial(sim_dir, tmp_path):
    out = tmp_path / "boot.json"
    assert main(["bootstrap", "--method", "ipw", "--trials", "1", "--data", str(sim_dir), "--out", str(out)]) == 0
    payload = read_json(out)
    assert len(payload["estimates"]) == 1
    assert payload["median"] == payload["quantile_05"] == payload["quantile_95"]


def test_bootstrap_is_deterministic(sim_dir, tmp_path):
    out = tmp_path / "boot.json"
    args = ["bootstrap", "--method", "ols", "--trials", "4", "--seed", "3", "--data", str(sim_dir), "--out", str(out)]
    assert main(args) == 0
    first = read_json(out)
    assert main(args) == 0
    second = read_json(out)
    first["manifest"].pop("timestamp"), second["manifest"].pop("timestamp")
    assert first == second


def test_bootstrap_tcl_reports_verdict(sim_dir, tmp_path):
    out = tmp_path / "boot.json"
    rc = main(["bootstrap", "--trials", "2", "--criterion", "auc", "--data", str(sim_dir), "--out", str(out),
               *FAST_GRID])
    assert rc == 0
    payload = read_json(out)
    assert payload["verdict"] in {"positive", "negative", "neutral"}
    assert payload["criterion"] == "auc"
    assert len(payload["lambdas"]) == 2


def test_bootstrap_tcl_independent_of_thread_count(sim_dir, tmp_path):
    payloads = []
    for threads in (1, 4):
        out = tmp_path / f"boot_{threads}.json"
        assert main(["bootstrap", "--method", "tcl", "--trials", "3", "--seed", "2", "--threads", str(threads),
                     "--data", str(sim_dir), "--out", str(out), *FAST_GRID]) == 0
        payload = read_json(out)
        payload.pop("manifest")
        payloads.append(payload)
    assert payloads[0] == payloads[1]


EVENTS_HEADER = "city_id,start_utc,peak_wind_ms,max_pw_kgm2,hourly_counts\n"


def test_saidi_command(tmp_path):
    cities = tmp_path / "cities.csv"
    cities.write_text("city_id,customer_count,income\nc1,100,10\nc2,50,20\n", encoding="utf-8")
    events = tmp_path / "events.csv"
    events.write_text(EVENTS_HEADER + "c1,2021-06-01T12:00:00Z,5,5,50;30;20\n"
                      "c2,2021-06-02T00:00:00Z,20,5,10;10;10\n", encoding="utf-8")
    out = tmp_path / "saidi.csv"
    assert main(["saidi", "--cities", str(cities), "--events", str(events), "--out", str(out)]) == 0
    _, frame = read_csv_report(out)
    rows = {(r.city_id, r.weather_class): r.saidi_minutes for r in frame.itertuples()}
    assert rows[("c1", "normal")] == pytest.approx(60.0)
    assert rows[("c1", "severe")] == 0.0
    assert rows[("c2", "severe")] == pytest.approx(36.0)
    assert rows[("c2", "normal")] == 0.0


def test_saidi_empty_events(tmp_path):
    cities = tmp_path / "cities.csv"
    cities.write_text("city_id,customer_count\nc1,100\nc2,50\n", encoding="utf-8")
    events = tmp_path / "events.csv"
    events.write_text(EVENTS_HEADER, encoding="utf-8")
    out = tmp_path / "saidi.csv"
    assert main(["saidi", "--cities", str(cities), "--events", str(events), "--out", str(out)]) == 0
    _, frame = read_csv_report(out)
    assert len(frame) == 4
    assert (frame["saidi_minutes"] == 0.0).all()


def test_saidi_rejects_undecodable_bytes(tmp_path, capsys):
    cities = tmp_path / "cities.csv"
    cities.write_bytes(b"\xff\xfe city_id,customer_count\nc1,100\n")
    events = tmp_path / "events.csv"
    events.write_text(EVENTS_HEADER, encoding="utf-8")
    rc = main(["saidi", "--cities", str(cities), "--events", str(events), "--out", str(tmp_path / "s.csv")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: schema:")


@pytest.fixture
def outage_fixture(tmp_path):
    rng = np.random.default_rng(4)
    n = 40
    income = rng.normal(50, 10, n)
    age = rng.normal(40, 5, n)
    forest = rng.random(n)
    cities = pd.DataFrame({"city_id": [f"c{i}" for i in range(n)], "customer_count": 1000,
                           "income": income, "age": age, "forest": forest})
    cities_csv = tmp_path / "cities.csv"
    cities.to_csv(cities_csv, index=False)
    lines = [EVENTS_HEADER.strip()]
    for i in range(n):
        for wind in (25.0, 5.0):
            hours = int(rng.integers(3, 8))
            counts = ";".join(str(int(c)) for c in rng.integers(5, 60, hours))
            lines.append(f"c{i},2021-07-0{1 + (wind > 10)}T00:00:00Z,{wind},3.0,{counts}")
    events_csv = tmp_path / "events.csv"
    events_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return cities_csv, events_csv


def test_table_command(outage_fixture, tmp_path):
    cities, events = outage_fixture
    out = tmp_path / "table.json"
    rc = main(["table", "--cities", str(cities), "--events", str(events), "--protected", "income",
               "--criterion", "l2_in", "--out", str(out), *FAST_GRID])
    assert rc == 0
    payload = read_json(out)
    assert payload["protected_attribute"] == "income"
    assert set(payload["weather"]) == {"severe", "normal"}
    for row in payload["weather"].values():
        assert -1.0 <= row["correlation"]["value"] <= 1.0
        assert 0.0 <= row["ols"]["p_value"] <= 1.0
        assert np.isfinite(row["ipw_without_transfer"]["tau"])
        assert row["tcl"]["lambda"] >= 0.0
        assert row["tcl"]["quantized"] in {"--", "-", "*", "+"}


def test_estimate_from_outage_csvs(outage_fixture, capsys):
    cities, events = outage_fixture
    rc = main(["estimate", "--method", "ols", "--cities", str(cities), "--events", str(events),
               "--protected", "income", "--target", "normal"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["method"] == "ols"


def test_estimate_unknown_protected_attribute(outage_fixture, capsys):
    cities, events = outage_fixture
    rc = main(["estimate", "--method", "ols", "--cities", str(cities), "--events", str(events),
               "--protected", "education"])
    assert rc == 1
    assert "education" in capsys.readouterr().err
