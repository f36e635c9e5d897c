#!/usr/bin/env python3
"""Render a run's estimates and exit non-zero under --fail-on-error if any looks unusable."""
import argparse, math, sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from tclkit.common import latest_run_dir, read_csv_report, read_json


def check_run(run_dir: Path) -> tuple[list[tuple[str, ...]], list[str]]:
    """Rows for the summary table and the list of problems found."""
    rows, problems = [], []
    for p in sorted((run_dir/"estimates").glob("*.json")):
        rec = read_json(p)
        tau = float(rec.get("tau", math.nan))
        lam = rec.get("lambda_selected")
        rows.append((rec.get("method", p.stem), rec.get("domain", ""), f"{tau:.4g}",
                     rec.get("quantized", ""), "" if lam is None else f"{lam:g}"))
        if not math.isfinite(tau):
            problems.append(f"{p.name}: non-finite estimate")
        if rec.get("boundary"):
            problems.append(f"{p.name}: lambda selected at a grid endpoint")

    boot = run_dir/"bootstrap.json"
    if boot.exists():
        rec = read_json(boot)
        est = [float(v) for v in rec.get("estimates", [])]
        rows.append((f"bootstrap/{rec.get('method')}", "target", f"{rec.get('median', math.nan):.4g}",
                     rec.get("verdict", ""), f"[{rec.get('quantile_05', math.nan):.3g}, {rec.get('quantile_95', math.nan):.3g}]"))
        if not all(math.isfinite(v) for v in est):
            problems.append("bootstrap.json: non-finite trial estimate")
        if int(rec.get("boundary_flag_count", 0)):
            problems.append(f"bootstrap.json: {rec['boundary_flag_count']} trial(s) selected lambda at a grid endpoint")

    report = run_dir/"select_lambda.csv"
    if report.exists():
        _, frame = read_csv_report(report)
        if "boundary" in frame.columns and bool(frame["boundary"].any()):
            problems.append("select_lambda.csv: a criterion selected lambda at a grid endpoint")
    return rows, problems


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--run-dir", default=None, help="run directory (default: newest under artifacts/)")
    ap.add_argument("--fail-on-error", action="store_true")
    args = ap.parse_args()

    run_dir = Path(args.run_dir) if args.run_dir else latest_run_dir("artifacts")
    rows, problems = check_run(run_dir)

    t = Table(title=f"Estimates ({run_dir.name})")
    t.add_column("Method"); t.add_column("Domain"); t.add_column("tau"); t.add_column("Symbol"); t.add_column("lambda")
    for r in rows: t.add_row(*r)
    Console().print(t)
    for msg in problems:
        print(f"WARN: {msg}")
    if args.fail_on_error and problems:
        print(f"FAIL: {len(problems)} problem(s) in {run_dir}."); sys.exit(1)


if __name__ == "__main__":
    main()
