import math

import pandas as pd

from scripts.validate_run import check_run
from tclkit.common import RunManifest, write_csv_report, write_json_atomic


def _run(tmp_path, tcl_boundary=False, tau=1.5):
    run = tmp_path / "run_20260101T000000Z"
    write_json_atomic(run / "estimates" / "ipw.json", {"method": "ipw", "domain": "target", "tau": tau,
                                                       "quantized": "*"})
    write_json_atomic(run / "estimates" / "tcl.json", {"method": "tcl", "domain": "target", "tau": 3.1,
                                                       "quantized": "*", "lambda_selected": 0.02,
                                                       "boundary": tcl_boundary})
    write_json_atomic(run / "bootstrap.json", {"method": "tcl", "estimates": [2.9, 3.2], "median": 3.05,
                                               "quantile_05": 2.9, "quantile_95": 3.2, "verdict": "neutral",
                                               "boundary_flag_count": 0})
    manifest = RunManifest(command="select-lambda", config_echo={}, seed=0)
    write_csv_report(run / "select_lambda.csv",
                     pd.DataFrame({"lambda": [0.0, 0.01], "tau": [3.0, 3.1], "boundary": [False, False]}), manifest)
    return run


def test_clean_run_has_no_problems(tmp_path):
    rows, problems = check_run(_run(tmp_path))
    assert problems == []
    assert [r[0] for r in rows] == ["ipw", "tcl", "bootstrap/tcl"]


def test_boundary_and_non_finite_are_flagged(tmp_path):
    _, problems = check_run(_run(tmp_path, tcl_boundary=True, tau=math.nan))
    assert any("non-finite" in p for p in problems)
    assert any("grid endpoint" in p for p in problems)
