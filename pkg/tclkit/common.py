# tclkit/common.py
from __future__ import annotations
import copy, hashlib, json, logging, os, pathlib, re, tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any

import pandas as pd
import yaml

from tclkit import __version__
from tclkit.errors import ConfigError

REPO = pathlib.Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = REPO / "configs" / "tcl.yaml"

DEFAULTS: dict[str, Any] = {
    "glm": {
        "preset": "default",
        "link": "sigmoid",
    },
    "grid": {"min": 0.0, "max": 0.2, "step": 1e-3, "max_expansions": 3},
    "criteria": {"folds": 5, "bandwidth": "median", "default": "mmd"},
    "bootstrap": {"trials": 100, "quantiles": [0.05, 0.95], "verdict_band": 100.0},
    "ingest": {
        "percentile": 0.8,
        "min_outage_rate": 0.001,
        "min_duration_hours": 2,
        "wind_threshold_ms": 19.0,
        "pw_threshold_kgm2": 16.0,
    },
    "simulation": {},
    "logging": {"level": "INFO"},
    "threads": 0,
}

_ENV_REF = re.compile(r"\$\{(?P<name>[A-Za-z_][A-Za-z0-9_]*)(?::-(?P<default>[^}]*))?\}")

log = logging.getLogger(__name__)


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_json_atomic(path, obj, indent=2):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", delete=False, encoding="utf-8", dir=str(path.parent)) as tf:
        json.dump(obj, tf, indent=indent)
        tf.write("\n")
        tmp = tf.name
    os.replace(tmp, path)


def sha256_file(path) -> str:
    path = pathlib.Path(path)
    if not path.exists():
        return ""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def latest_run_dir(root="artifacts"):
    root = pathlib.Path(root)
    runs = sorted([p for p in root.glob("run_*") if p.is_dir()])
    if not runs:
        raise FileNotFoundError(f"No run directories found in {root}/")
    return runs[-1]


def expand_env(value):
    """Resolve ${NAME:-default} references inside config strings."""
    if isinstance(value, dict):
        return {k: expand_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [expand_env(v) for v in value]
    if not isinstance(value, str):
        return value

    def sub(m):
        return os.environ.get(m.group("name"), m.group("default") or "")

    expanded = _ENV_REF.sub(sub, value)
    if expanded != value:
        # a fully substituted scalar goes back through YAML so numbers stay numbers
        return yaml.safe_load(expanded) if expanded.strip() else None
    return expanded


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(out.get(key), dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def load_config(path=None) -> dict[str, Any]:
    """Load configs/tcl.yaml (or `path`) over the built-in defaults."""
    cfg_path = pathlib.Path(path) if path is not None else DEFAULT_CONFIG_PATH
    if not cfg_path.exists():
        if path is not None:
            raise ConfigError(f"config file not found: {cfg_path}")
        return copy.deepcopy(DEFAULTS)
    try:
        raw = yaml.safe_load(cfg_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{cfg_path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{cfg_path}: top level must be a mapping")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{cfg_path}: unknown section(s) {', '.join(unknown)}")
    return _merge(DEFAULTS, expand_env(raw))


def resolve_threads(flag: int | None = None) -> int:
    if flag is not None and int(flag) > 0:
        return int(flag)
    env = os.environ.get("TCLKIT_THREADS", "").strip()
    if env:
        try:
            if int(env) > 0:
                return int(env)
        except ValueError:
            raise ConfigError(f"TCLKIT_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def setup_logging(level: str | int = "INFO") -> None:
    from rich.console import Console
    from rich.logging import RichHandler

    root = logging.getLogger()
    for h in list(root.handlers):
        if isinstance(h, RichHandler):
            root.removeHandler(h)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level if isinstance(level, int) else str(level).upper())


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_echo: dict[str, Any]
    seed: int | None
    artifact_version: str = __version__
    timestamp: str | None = field(default_factory=lambda: datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def jsonable(obj):
    """Best-effort conversion of numpy/pathlib/enum values for json.dump."""
    import enum
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, pathlib.PurePath):
        return str(obj)
    return obj


def write_result_json(path, payload: dict, manifest: RunManifest) -> None:
    write_json_atomic(path, jsonable({**payload, "manifest": manifest.to_dict()}))


def write_csv_report(path, frame: pd.DataFrame, manifest: RunManifest) -> None:
    """CSV with the manifest as a leading '# manifest:' comment line."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "# manifest: " + json.dumps(jsonable(manifest.to_dict()), sort_keys=True) + "\n"
    with tempfile.NamedTemporaryFile("w", delete=False, encoding="utf-8", dir=str(path.parent), newline="") as tf:
        tf.write(header)
        frame.to_csv(tf, index=False, lineterminator="\n")
        tmp = tf.name
    os.replace(tmp, path)


def read_csv_report(path) -> tuple[dict[str, Any] | None, pd.DataFrame]:
    path = pathlib.Path(path)
    manifest = None
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if first.startswith("# manifest: "):
        manifest = json.loads(first[len("# manifest: "):])
    return manifest, pd.read_csv(path, comment="#")
