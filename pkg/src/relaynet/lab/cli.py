"""Command-line entry point: ``relaynet <verb> [--config FILE] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 on success, 2 on invalid configuration or input, 3 on a
numerical failure (non-convergence or an internal consistency check).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigError, ConsistencyError, ConvergenceError, ModelAssumptionError, StructureError
from .config import ExperimentConfig, config_from_dict, parse_config
from .experiment import (
    build_model,
    fluid_comparison,
    manifest,
    probability_rows,
    run_experiment,
    slope_report,
    write_csv,
)

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaynet", description="Relay-network simulation and numerics lab.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides the config's output)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replica blocks")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="event probabilities per lambda")
    sub.add_parser("fluid", parents=[common], help="fluid path against closed form and Euler pair")
    sub.add_parser("rate", parents=[common], help="rate of the configured threshold event")
    sub.add_parser("ldp-study", parents=[common], help="probabilities, slope table and slope fit")
    lem = sub.add_parser("check-lemmas", parents=[common], help="randomized inequality campaigns")
    lem.add_argument("--instances", type=int, help="override lemmas.instances")
    run = sub.add_parser("run", parents=[common], help="full report bundle")
    run.add_argument("--instances", type=int, help="override lemmas.instances")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        cfg, base = ExperimentConfig(), None
    else:
        cfg, base = parse_config(args.config), args.config.parent
    if args.seed is not None:
        data = cfg.canonical()
        data["run"]["seed"] = args.seed
        cfg = config_from_dict(data, base_dir=base)
    if args.threads < 1:
        raise ConfigError([("--threads", "must be at least 1")])
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output) if args.out is None else args.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg: ExperimentConfig, files: list[str]) -> None:
    body = manifest(cfg, {"files": files})
    (out / "manifest.json").write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")


def _simulate(args, cfg, out):
    rows = probability_rows(build_model(cfg), args.threads)
    write_csv(out / "probabilities.csv", ["lambda", "replicas", "p_hat", "stderr"], rows)
    for r in rows:
        print(f"lambda={r['lambda']:g} p_hat={r['p_hat']:.6g} stderr={r['stderr']:.3g}")
    return ["probabilities.csv"]


def _fluid(args, cfg, out):
    rows = fluid_comparison(build_model(cfg))
    write_csv(out / "fluid.csv", ["time", "beta", "oracle", "euler_lower", "euler_upper"], rows)
    print(f"busy mass at t_final: {rows[-1]['beta']:.8g}")
    return ["fluid.csv"]


def _rate(args, cfg, out):
    from ..rate import event_rate

    ev = cfg.run.event
    res = event_rate(ev.threshold, cfg.solver.rate_time_steps, cfg.model.intensity.t_final)
    (out / "rate.json").write_text(json.dumps({"level": res.level, "value": res.value}, sort_keys=True, indent=2)
                                   + "\n")
    rows = [{"time": t, "beta": b, "gamma": g} for t, b, g in zip(res.time_grid, res.beta, res.gamma)]
    write_csv(out / "rate_path.csv", ["time", "beta", "gamma"], rows)
    print(f"rate of frustrated mass >= {res.level:g}: {res.value:.8g}")
    return ["rate.json", "rate_path.csv"]


def _ldp_study(args, cfg, out):
    model = build_model(cfg)
    rows = probability_rows(model, args.threads)
    write_csv(out / "probabilities.csv", ["lambda", "replicas", "p_hat", "stderr"], rows)
    table, fit = slope_report(model, rows)
    write_csv(out / "slope.csv", ["lambda", "minus_log_p"], table)
    (out / "slope_fit.json").write_text(json.dumps(fit, sort_keys=True, indent=2) + "\n")
    print(f"slope={fit['slope']} rate={fit['rate']} relative_error={fit['relative_error']}")
    return ["probabilities.csv", "slope.csv", "slope_fit.json"]


def _check_lemmas(args, cfg, out):
    from .lemmas import run_campaigns

    n = cfg.lemmas.instances if args.instances is None else args.instances
    if n < 1:
        raise ConfigError([("--instances", "must be at least 1")])
    results = run_campaigns(n, cfg.run.seed)
    write_csv(out / "lemmas.csv", ["lemma_id", "instances", "violations", "max_slack"], [r.row() for r in results])
    for r in results:
        status = "PASS" if r.violations == 0 else "FAIL"
        print(f"{status} {r.lemma_id}: {r.violations}/{r.instances} violations, max slack {r.max_slack:.3g}")
    return ["lemmas.csv"]


_VERBS = {"simulate": _simulate, "fluid": _fluid, "rate": _rate, "ldp-study": _ldp_study,
          "check-lemmas": _check_lemmas}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = _out_dir(args, cfg)
        if args.verb == "run":
            if args.instances is not None and args.instances < 1:
                raise ConfigError([("--instances", "must be at least 1")])
            paths = run_experiment(cfg, out, args.threads, args.instances)
            print("\n".join(str(p) for p in paths.values()))
        else:
            files = _VERBS[args.verb](args, cfg, out)
            _write_manifest(out, cfg, files)
    except ConfigError as exc:
        print(f"invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StructureError, ModelAssumptionError, FileNotFoundError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, ConsistencyError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
