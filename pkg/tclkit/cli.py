# tclkit/cli.py
"""
Command-line front end: python -m tclkit <command> [flags]

  simulate       generate a seeded source/target pair plus truth.json
  estimate       one ACE estimate (correlation | ols | ipw | pooled | tcl)
  select-lambda  criterion report over a lambda grid (CSV)
  bootstrap      bootstrap distribution of an estimator (JSON)
  saidi          SAIDI per city and weather class (CSV)
  table          comparison of all estimators for both weather classes (JSON)

Errors print one line `error: <category>: <message>` to stderr and exit 1.
"""
from __future__ import annotations
import argparse, json, logging, pathlib, sys
from typing import Any, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table

from tclkit import __version__
from tclkit.common import (RunManifest, jsonable, load_config, resolve_threads, setup_logging,
                           write_csv_report, write_result_json)
from tclkit.core import DomainPair, EstimateMethod, LinkKind, quantize_ace
from tclkit.criteria import Criterion, KernelConfig, make_grid, select_lambda, select_lambda_expanding
from tclkit.errors import ConfigError, TclError, ValidationError
from tclkit.estimators import correlation_estimate, ols_estimate, pooled_ace, target_only_ace, tcl_ace
from tclkit.glm import GlmFitConfig
from tclkit.ingest import (WeatherClass, assemble_observations, read_cities, read_events,
                           read_observations, saidi_frame, saidi_table, write_observations)
from tclkit.sim import SimConfig, generate
from tclkit.tcl import TheoreticalLambdaParams, theoretical_lambda
from tclkit.uq import bootstrap_ace

log = logging.getLogger("tclkit.cli")

SOURCE_CSV = "observations_source.csv"
TARGET_CSV = "observations_target.csv"
TRUTH_JSON = "truth.json"
ALL_CRITERIA = ",".join(c.value for c in Criterion)
METHODS = ["correlation", "ols", "ipw", "pooled", "tcl"]


def _stderr() -> Console:
    return Console(stderr=True)


# --- shared plumbing ------------------------------------------------------

def _manifest(args, cfg: dict, seed_only: bool = False) -> RunManifest:
    """seed_only drops the wall clock and output path so same-seed artifacts are byte-identical."""
    skip = ("func", "parser", "out") if seed_only else ("func", "parser")
    flags = {k: v for k, v in vars(args).items() if k not in skip}
    extra = {"timestamp": None} if seed_only else {}
    return RunManifest(command=args.command, config_echo=jsonable({"flags": flags, "config": cfg}),
                       seed=getattr(args, "seed", None), **extra)


def _emit_json(args, payload: dict, manifest: RunManifest) -> None:
    if args.out:
        write_result_json(args.out, payload, manifest)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(json.dumps(jsonable({**payload, "manifest": manifest.to_dict()}), indent=2) + "\n")


def _glm_config(args, cfg: dict) -> GlmFitConfig:
    glm = dict(cfg["glm"])
    if args.glm_preset:
        glm["preset"] = args.glm_preset
    return GlmFitConfig.from_mapping(glm)


def _link(args, cfg: dict) -> LinkKind:
    return LinkKind(args.link or cfg["glm"]["link"])


def _threads(args, cfg: dict) -> int:
    flag = args.threads if args.threads is not None else int(cfg.get("threads") or 0)
    return resolve_threads(flag)


def _grid(args, cfg: dict) -> np.ndarray:
    g = cfg["grid"]
    lo = args.grid_min if args.grid_min is not None else float(g["min"])
    hi = args.grid_max if args.grid_max is not None else float(g["max"])
    step = args.grid_step if args.grid_step is not None else float(g["step"])
    grid = make_grid(lo, hi, step)
    if grid.size == 0:
        raise ValidationError("empty lambda grid")
    return grid


def _kernel(args, cfg: dict) -> KernelConfig:
    raw = args.bandwidth if args.bandwidth is not None else cfg["criteria"]["bandwidth"]
    if raw in (None, "median"):
        return KernelConfig(None)
    return KernelConfig(float(raw))


def _folds(args, cfg: dict) -> int:
    return args.folds if args.folds is not None else int(cfg["criteria"]["folds"])


def _weather_pairs(args, cfg: dict) -> dict[WeatherClass, DomainPair]:
    """Target class -> (source = other class, target = class) from cities/events CSVs."""
    ing = cfg["ingest"]
    cities = read_cities(args.cities)
    events = read_events(args.events)
    table = saidi_table(cities, events, float(ing["min_outage_rate"]), int(ing["min_duration_hours"]),
                        float(ing["wind_threshold_ms"]), float(ing["pw_threshold_kgm2"]))
    percentile = args.percentile if args.percentile is not None else float(ing["percentile"])
    obs = assemble_observations(cities, table, args.protected, percentile)
    return {
        WeatherClass.SEVERE: DomainPair(obs[WeatherClass.NORMAL], obs[WeatherClass.SEVERE]),
        WeatherClass.NORMAL: DomainPair(obs[WeatherClass.SEVERE], obs[WeatherClass.NORMAL]),
    }


def _load_pair(args, cfg: dict) -> DomainPair:
    if args.data:
        d = pathlib.Path(args.data)
        return DomainPair(read_observations(d / SOURCE_CSV), read_observations(d / TARGET_CSV))
    if args.source_csv and args.target_csv:
        return DomainPair(read_observations(args.source_csv), read_observations(args.target_csv))
    if args.cities and args.events and args.protected:
        return _weather_pairs(args, cfg)[WeatherClass(args.target)]
    args.parser.error("give --data DIR, --source-csv with --target-csv, or --cities/--events/--protected")


def _resolve_lambda(args, cfg: dict, pair: DomainPair, link: LinkKind, config: GlmFitConfig):
    """Returns (lambda, CriterionReport | None)."""
    raw = str(args.lam).lower()
    if raw == "auto":
        report = select_lambda_expanding(
            pair, _grid(args, cfg), [args.criterion], link, config, seed=args.seed,
            folds=_folds(args, cfg), kernel=_kernel(args, cfg), threads=_threads(args, cfg),
            max_expansions=int(cfg["grid"]["max_expansions"]),
        )
        return report.selected[args.criterion], report
    if raw == "theory":
        return theoretical_lambda(TheoreticalLambdaParams.from_pair(pair.source, pair.target)), None
    try:
        lam = float(raw)
    except ValueError:
        args.parser.error(f"--lambda must be 'auto', 'theory' or a number, got {args.lam!r}")
    return lam, None


# --- commands -------------------------------------------------------------

def cmd_simulate(args, cfg: dict) -> int:
    base = dict(cfg.get("simulation") or {})
    if args.preset == "literal":
        base["index_offset"], base["center_index"] = 0.0, False
    overrides = {
        "dimension": args.d, "sparsity": args.s, "n_target": args.n_target, "n_source": args.n_source,
        "difference_magnitude": args.magnitude, "tau_source": args.tau_source, "tau_target": args.tau_target,
        "true_link": args.true_link, "covariate_scale": args.covariate_scale,
        "coefficient_scale": args.coefficient_scale, "noise_scale": args.noise_scale,
        "index_offset": args.index_offset, "confounding_scale": args.confounding_scale, "seed": args.seed,
        "center_index": None if args.index_mode is None else args.index_mode == "centered",
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    sim_cfg = SimConfig.from_mapping(base)
    pair, truth = generate(sim_cfg)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_observations(out / SOURCE_CSV, pair.source)
    write_observations(out / TARGET_CSV, pair.target)
    write_result_json(out / TRUTH_JSON, truth.to_dict(), _manifest(args, cfg, seed_only=True))
    log.info("simulated n_S=%d n_T=%d d=%d (treated: source %.2f, target %.2f) into %s",
             pair.source.n, pair.target.n, pair.d, pair.source.treated_fraction,
             pair.target.treated_fraction, out)
    return 0


def _estimate(method: str, pair: DomainPair, args, cfg: dict, link: LinkKind,
              config: GlmFitConfig) -> dict[str, Any]:
    if method == "correlation":
        est = correlation_estimate(pair.target)
    elif method == "ols":
        est = ols_estimate(pair.target)
    elif method == "ipw":
        est = target_only_ace(pair.target, link, config)
    elif method == "pooled":
        est = pooled_ace(pair, link, config)
    else:
        lam, report = _resolve_lambda(args, cfg, pair, link, config)
        est, fit = tcl_ace(pair, link, lam, config)
        out = _payload(est)
        out.update({"lambda_selected": lam, "support": fit.support.tolist(), "sparsity": fit.sparsity,
                    "converged": fit.converged})
        if report is not None:
            out.update({"criterion": args.criterion, "boundary": report.boundary_flag,
                        "grid_expansions": report.expansions})
        return out
    return _payload(est)


def _payload(est) -> dict[str, Any]:
    out = {"method": est.method.value, "domain": est.domain_label, "tau": est.value,
           "quantized": quantize_ace(est.value)}
    out.update({k: v for k, v in est.details.items() if k not in out})
    return out


def cmd_estimate(args, cfg: dict) -> int:
    pair = _load_pair(args, cfg)
    payload = _estimate(args.method, pair, args, cfg, _link(args, cfg), _glm_config(args, cfg))
    _emit_json(args, payload, _manifest(args, cfg))
    return 0


def cmd_select_lambda(args, cfg: dict) -> int:
    pair = _load_pair(args, cfg)
    criteria = [c.strip() for c in args.criteria.split(",") if c.strip()]
    common = dict(link=_link(args, cfg), config=_glm_config(args, cfg), seed=args.seed,
                  folds=_folds(args, cfg), kernel=_kernel(args, cfg), threads=_threads(args, cfg))
    if args.expand:
        report = select_lambda_expanding(pair, _grid(args, cfg), criteria,
                                         max_expansions=int(cfg["grid"]["max_expansions"]), **common)
    else:
        report = select_lambda(pair, _grid(args, cfg), criteria, **common)
    write_csv_report(args.out, report.to_frame(), _manifest(args, cfg))

    t = Table(title=f"Selected lambda over [{report.lambda_grid[0]:g}, {report.lambda_grid[-1]:g}]")
    t.add_column("Criterion"); t.add_column("lambda"); t.add_column("tau"); t.add_column("Boundary")
    for c in report.criteria:
        lam = report.selected[c.value]
        t.add_row(c.value, f"{lam:g}", f"{report.estimate_at(lam):.4g}", "yes" if report.boundary[c.value] else "")
    _stderr().print(t)
    return 0


def cmd_bootstrap(args, cfg: dict) -> int:
    pair = _load_pair(args, cfg)
    bcfg = cfg["bootstrap"]
    trials = args.trials if args.trials is not None else int(bcfg["trials"])
    if trials < 1:
        args.parser.error("--trials must be at least 1")
    summary = bootstrap_ace(
        pair, args.method, trials, criterion=args.criterion, grid=_grid(args, cfg), seed=args.seed,
        config=_glm_config(args, cfg), link=_link(args, cfg), threads=_threads(args, cfg),
        folds=_folds(args, cfg), kernel=_kernel(args, cfg),
        max_expansions=int(cfg["grid"]["max_expansions"]), band=float(bcfg["verdict_band"]),
    )
    payload = summary.to_dict()
    if args.method == "tcl":
        payload["criterion"] = args.criterion

    t = Table(title=f"Bootstrap ({summary.method.value}, {trials} trials)")
    for col in ("median", "q05", "q95", "verdict"):
        t.add_column(col)
    t.add_row(f"{summary.median:.4g}", f"{summary.quantile_05:.4g}", f"{summary.quantile_95:.4g}",
              summary.verdict.value)
    _stderr().print(t)
    _emit_json(args, payload, _manifest(args, cfg))
    return 0


def cmd_saidi(args, cfg: dict) -> int:
    ing = cfg["ingest"]
    for key in ("min_outage_rate", "min_duration_hours", "wind_threshold_ms", "pw_threshold_kgm2"):
        flag = getattr(args, key)
        if flag is not None:
            ing[key] = flag
    cities = read_cities(args.cities)
    events = read_events(args.events)
    table = saidi_table(cities, events, float(ing["min_outage_rate"]), int(ing["min_duration_hours"]),
                        float(ing["wind_threshold_ms"]), float(ing["pw_threshold_kgm2"]),
                        threads=_threads(args, cfg))
    write_csv_report(args.out, saidi_frame(table), _manifest(args, cfg))
    log.info("wrote SAIDI for %d cities to %s", len(cities), args.out)
    return 0


def cmd_table(args, cfg: dict) -> int:
    pairs = _weather_pairs(args, cfg)
    link, config = _link(args, cfg), _glm_config(args, cfg)
    rows: dict[str, Any] = {}
    for w, pair in pairs.items():
        corr = correlation_estimate(pair.target)
        ols = ols_estimate(pair.target)
        ipw = target_only_ace(pair.target, link, config)
        tcl = _estimate("tcl", pair, args, cfg, link, config)
        rows[w.value] = {
            "correlation": {"value": corr.value, "p_value": corr.details["p_value"]},
            "ols": {"coefficient": ols.value, "p_value": ols.details["p_value"], "quantized": quantize_ace(ols.value)},
            "ipw_without_transfer": {"tau": ipw.value, "quantized": quantize_ace(ipw.value)},
            "tcl": {"tau": tcl["tau"], "quantized": tcl["quantized"], "lambda": tcl["lambda_selected"]},
        }

    t = Table(title=f"ACE of {args.protected!r} on SAIDI")
    for col in ("Weather", "Corr.", "OLS", "w/o TL", "l1-TCL"):
        t.add_column(col)
    for w, r in rows.items():
        t.add_row(w, f"{r['correlation']['value']:.2f}",
                  f"{r['ols']['coefficient']:.1f} ({r['ols']['quantized']})",
                  f"{r['ipw_without_transfer']['tau']:.1f} ({r['ipw_without_transfer']['quantized']})",
                  f"{r['tcl']['tau']:.1f} ({r['tcl']['quantized']})")
    _stderr().print(t)
    _emit_json(args, {"protected_attribute": args.protected, "weather": rows}, _manifest(args, cfg))
    return 0


# --- parser ---------------------------------------------------------------

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--data", help=f"directory holding {SOURCE_CSV} and {TARGET_CSV}")
    g.add_argument("--source-csv")
    g.add_argument("--target-csv")
    _add_weather_flags(g)
    g.add_argument("--target", choices=[w.value for w in WeatherClass], default="severe",
                   help="weather class used as the target domain (the other is the source)")


def _add_weather_flags(g) -> None:
    g.add_argument("--cities", help="cities.csv")
    g.add_argument("--events", help="events.csv")
    g.add_argument("--protected", help="protected attribute column (or customer_count)")
    g.add_argument("--percentile", type=float, default=None)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--link", choices=[k.value for k in LinkKind], default=None)
    g.add_argument("--glm-preset", choices=["default", "paper"], default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=None, help="worker threads (default: TCLKIT_THREADS or CPU count)")


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("lambda selection")
    g.add_argument("--grid-min", type=float, default=None)
    g.add_argument("--grid-max", type=float, default=None)
    g.add_argument("--grid-step", type=float, default=None)
    g.add_argument("--folds", type=int, default=None)
    g.add_argument("--bandwidth", default=None, help="MMD kernel bandwidth or 'median'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tclkit", description="l1 transfer counterfactual learning toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", default=None, help="YAML config (default configs/tcl.yaml)")
    ap.add_argument("--log-level", default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic source/target pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", choices=["paper", "literal"], default="paper",
                   help="'literal' uses an absolute zero threshold instead of the centered index")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--n-target", type=int, default=None)
    p.add_argument("--n-source", type=int, default=None)
    p.add_argument("--magnitude", type=float, default=None)
    p.add_argument("--tau-source", type=float, default=None)
    p.add_argument("--tau-target", type=float, default=None)
    p.add_argument("--true-link", choices=[k.value for k in LinkKind], default=None)
    p.add_argument("--covariate-scale", type=float, default=None)
    p.add_argument("--coefficient-scale", type=float, default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.add_argument("--index-offset", type=float, default=None)
    p.add_argument("--index-mode", choices=["centered", "absolute"], default=None,
                   help="centered: threshold sits index-offset below the expected index")
    p.add_argument("--confounding-scale", type=float, default=None)
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser("estimate", help="one ACE estimate")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--lambda", dest="lam", default="auto", help="'auto', 'theory' or a value (tcl only)")
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default=None)
    p.add_argument("--out", default=None, help="JSON output (default stdout)")
    _add_data_flags(p); _add_model_flags(p); _add_grid_flags(p)
    p.set_defaults(func=cmd_estimate, parser=p)

    p = sub.add_parser("select-lambda", help="criterion report over a lambda grid")
    p.add_argument("--criteria", default=ALL_CRITERIA, help="comma-separated criterion names")
    p.add_argument("--expand", action="store_true", help="widen the grid when a criterion lands on an endpoint")
    p.add_argument("--out", required=True, help="CSV output")
    _add_data_flags(p); _add_model_flags(p); _add_grid_flags(p)
    p.set_defaults(func=cmd_select_lambda, parser=p)

    p = sub.add_parser("bootstrap", help="bootstrap distribution of an estimator")
    p.add_argument("--method", choices=[m.value for m in EstimateMethod], default="tcl")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default=None)
    p.add_argument("--out", default=None, help="JSON output (default stdout)")
    _add_data_flags(p); _add_model_flags(p); _add_grid_flags(p)
    p.set_defaults(func=cmd_bootstrap, parser=p)

    p = sub.add_parser("saidi", help="SAIDI per city and weather class")
    p.add_argument("--cities", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True, help="saidi.csv")
    p.add_argument("--min-outage-rate", dest="min_outage_rate", type=float, default=None)
    p.add_argument("--min-duration-hours", dest="min_duration_hours", type=int, default=None)
    p.add_argument("--wind-threshold", dest="wind_threshold_ms", type=float, default=None)
    p.add_argument("--pw-threshold", dest="pw_threshold_kgm2", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_saidi, parser=p)

    p = sub.add_parser("table", help="all estimators for both weather classes")
    g = p.add_argument_group("input")
    g.add_argument("--cities", required=True)
    g.add_argument("--events", required=True)
    g.add_argument("--protected", required=True)
    g.add_argument("--percentile", type=float, default=None)
    p.add_argument("--lambda", dest="lam", default="auto")
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default=None)
    p.add_argument("--out", default=None)
    _add_model_flags(p); _add_grid_flags(p)
    p.set_defaults(func=cmd_table, parser=p)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        setup_logging(args.log_level or cfg["logging"]["level"])
        if getattr(args, "criterion", "") is None:
            args.criterion = str(cfg["criteria"]["default"])
            if args.criterion not in ALL_CRITERIA.split(","):
                raise ConfigError(f"criteria.default: unknown criterion {args.criterion!r}")
        return args.func(args, cfg)
    except TclError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1
