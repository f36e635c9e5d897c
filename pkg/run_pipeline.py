#!/usr/bin/env python3
"""Reproducible simulation run: simulate -> select-lambda -> estimate -> bootstrap -> validate."""
from __future__ import annotations
import argparse, json, os, shutil, subprocess, sys, time
from pathlib import Path
from datetime import datetime, timezone

from tclkit.common import sha256_file

REPO = Path(__file__).parent.resolve()
VENV_PYTHON = REPO / ".venv" / "bin" / "python"

CONFIGS = [
    "configs/tcl.yaml",
]

ESTIMATE_METHODS = ["ipw", "pooled", "tcl"]


def sh(cmd, cwd=None, check=True):
    print(f"[run] {cmd}")
    st = time.time()
    env = os.environ.copy()
    env['PYTHONPATH'] = f"{REPO}:{env.get('PYTHONPATH', '')}"
    p = subprocess.run(cmd, shell=True, cwd=cwd, env=env)
    dt = time.time() - st
    if check and p.returncode != 0:
        raise SystemExit(f"Command failed ({p.returncode}): {cmd}")
    return dt, p.returncode


def capture_env(dst: Path):
    dst.mkdir(parents=True, exist_ok=True)
    (dst/"python.txt").write_text(sys.version, encoding="utf-8")
    try:
        out = subprocess.check_output([sys.executable, "-m", "pip", "freeze"], text=True, timeout=10)
        (dst/"pip_freeze.txt").write_text(out, encoding="utf-8")
    except Exception as e:
        (dst/"pip_freeze.txt").write_text(f"error: {e}", encoding="utf-8")
    (dst/"os.txt").write_text(f"{sys.platform} cpus={os.cpu_count()}", encoding="utf-8")


def snapshot_configs(run_dir: Path, config: Path):
    snap = run_dir/"configs_snapshot"
    snap.mkdir(parents=True, exist_ok=True)
    for cfg in {*(REPO/c for c in CONFIGS), config}:
        if cfg.exists():
            shutil.copy2(cfg, snap/cfg.name)
    lines = [f"{sha256_file(p)}  {p.name}" for p in sorted(snap.glob("*")) if p.name != "checksums.txt"]
    (snap/"checksums.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(run_dir: Path, data: dict):
    (run_dir/"MANIFEST.json").write_text(json.dumps(data, indent=2), encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description="l1-TCL simulation reproduction run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=str(REPO/"configs"/"tcl.yaml"))
    ap.add_argument("--criterion", default="mmd")
    ap.add_argument("--link", default="sigmoid", help="fitted propensity link")
    ap.add_argument("--glm-preset", default="paper", choices=["default", "paper"],
                    help="GLM optimizer preset passed to every step")
    ap.add_argument("--grid-max", type=float, default=0.2)
    ap.add_argument("--grid-step", type=float, default=0.01, help="coarser than the config default to keep runs short")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--threads", type=int, default=0)
    ap.add_argument("--notes", default="", help="note to include in manifest")
    ap.add_argument("--strict", action="store_true", help="fail on validation gate error")
    args = ap.parse_args()

    run_id = "run_" + datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    run_dir = REPO/"artifacts"/run_id
    run_dir.mkdir(parents=True, exist_ok=False)
    snapshot_configs(run_dir, Path(args.config))
    capture_env(run_dir/"env")

    python_exe = str(VENV_PYTHON) if VENV_PYTHON.exists() else sys.executable
    tcl = f"{python_exe} -m tclkit --config \"{args.config}\""
    data = run_dir/"data"
    common = (f"--data \"{data}\" --seed {args.seed} --link {args.link} --glm-preset {args.glm_preset} "
              f"--threads {args.threads} "
              f"--grid-max {args.grid_max} --grid-step {args.grid_step}")
    duration = {}

    d, _ = sh(f"{tcl} simulate --preset paper --seed {args.seed} --out \"{data}\"")
    duration["simulate"] = d

    d, _ = sh(f"{tcl} select-lambda {common} --expand --out \"{run_dir/'select_lambda.csv'}\"")
    duration["select_lambda"] = d

    for m in ESTIMATE_METHODS:
        extra = f" --lambda auto --criterion {args.criterion}" if m == "tcl" else ""
        d, _ = sh(f"{tcl} estimate --method {m} {common}{extra} --out \"{run_dir/'estimates'/(m + '.json')}\"")
        duration[f"estimate_{m}"] = d

    d, _ = sh(f"{tcl} bootstrap --method tcl --trials {args.trials} --criterion {args.criterion} {common} "
              f"--out \"{run_dir/'bootstrap.json'}\"")
    duration["bootstrap"] = d

    gate_cmd = f"{python_exe} scripts/validate_run.py --run-dir \"{run_dir}\""
    if args.strict:
        gate_cmd += " --fail-on-error"
    try:
        d, _ = sh(gate_cmd, cwd=REPO, check=args.strict)
        duration["validate_run"] = d
    except SystemExit as e:
        duration["validate_run"] = -1
        print(f"[warn] Validation gate failed: {e}")
        if args.strict:
            raise

    manifest = {
        "run_id": run_id,
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "notes": args.notes,
        "seed": args.seed,
        "criterion": args.criterion,
        "link": args.link,
        "glm_preset": args.glm_preset,
        "grid": {"max": args.grid_max, "step": args.grid_step},
        "trials": args.trials,
        "durations_sec": duration,
        "gates": {"strict": bool(args.strict)},
        "status": "complete",
        "data_hash": {p.name: sha256_file(p) for p in sorted(data.glob("*.csv"))},
    }
    (run_dir/"README.md").write_text(
        f"# Run {run_id}\n\nSeed {args.seed}, criterion {args.criterion}, link {args.link}.\n\nDurations (s):\n" +
        "\n".join([f"- {k}: {v:.2f}" if v >= 0 else f"- {k}: FAILED" for k, v in duration.items()]) + "\n",
        encoding="utf-8"
    )
    write_manifest(run_dir, manifest)
    print(f"\nDone. Run directory: {run_dir}")


if __name__ == "__main__":
    main()
