"""Command-line front end.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import artifacts
from .config import ScenarioConfig, describe_keys, from_dict, load_config, parse_override
from .errors import ConfigError, TwinError

log = logging.getLogger("sdof_twin")

OUTPUT_ENV = "SDOF_TWIN_OUTPUT"
DEFAULT_OUTPUT = "runs"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad invocation that argparse itself cannot detect."""


# -- experiment suites -------------------------------------------------------

def experiment_matrix() -> list:
    """``(cell_name, overrides)`` for every cell of the reference experiment grid."""
    cells = []
    stiff_n = {150: 35, 250: 50, 550: 50}
    for tau in (150, 250, 550):
        for s in (0.005, 0.015):
            cells.append((f"stiffness_tau{tau}_s{s}", {"case": "stiffness", "tau": float(tau),
                                                       "n_obs": stiff_n[tau], "sigma0": s}))
    mass_n = {150: 75, 550: 175}
    for tau in (150, 550):
        for s in (0.005, 0.015):
            cells.append((f"mass_tau{tau}_s{s}", {"case": "mass", "tau": float(tau),
                                                  "n_obs": mass_n[tau], "sigma0": s}))
    for tau, n in ((150, 75), (150, 120), (150, 150), (350, 75)):
        cells.append((f"joint_tau{tau}_n{n}", {"case": "joint", "tau": float(tau), "n_obs": n,
                                               "sigma0": 0.025}))
    return cells


SUITES = {"paper-matrix": experiment_matrix}


def _run_cell(args):
    """Worker entry: run one cell, return ``(name, summary_rows, error)``."""
    name, cfg_dict, out_dir = args
    from .twin import rmse, run_pipeline

    try:
        config = from_dict(cfg_dict)
        twin, forecast = run_pipeline(config, out_dir)
    except Exception as exc:  # reported in the failure manifest
        return name, [], f"{type(exc).__name__}: {exc}"
    rows = []
    for (method, quantity), fc in sorted(forecast.quantities.items()):
        rows.append((name, config.case, config.tau, config.n_obs, config.sigma0, method, quantity,
                     rmse(fc, config, hi=config.tau), rmse(fc, config, lo=config.tau)))
    return name, rows, None


SUMMARY_COLUMNS = ("cell", "case", "tau", "n_obs", "sigma0", "method", "quantity",
                   "rmse_window", "rmse_extrapolation")


# -- helpers ------------------------------------------------------------------

def _output_root(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config, args.overrides or ())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .twin import simulate

    config = _config(args)
    observations = simulate(config)
    out = _output_root(args) / "observations.csv"
    artifacts.atomic_write_text(out, artifacts.observations_text(observations, config.digest()))
    print(f"wrote {len(observations)} observations to {out}")
    return EXIT_OK


def _observations_path(args) -> Path:
    return Path(args.observations) if args.observations else _output_root(args) / "observations.csv"


def cmd_process(args) -> int:
    from .twin import process

    config = _config(args)
    _, observations = artifacts.read_observations(_observations_path(args))
    processed = process(observations, config)
    out = _output_root(args) / "training.csv"
    artifacts.atomic_write_text(out, artifacts.training_text(processed, config.digest()))
    print(f"wrote {len(processed)} estimates ({len(processed.rejected)} rejected) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .twin import train

    config = _config(args)
    digest, observations = artifacts.read_observations(_observations_path(args))
    if digest != config.digest():
        log.warning("observations were produced under config %s, training under %s",
                    digest, config.digest())
    twin = train(config, observations, simulated=(digest == config.digest()))
    files = {"twin.json": artifacts.dumps_json(artifacts.twin_to_dict(twin)),
             "training.csv": artifacts.training_text(twin.processed, config.digest())}
    for (method, quantity), f in sorted(twin.fits.items()):
        files[f"em_trace_{method}_{quantity}.csv"] = artifacts.em_trace_text(
            f.trace, f.model.n_experts, config.digest())
        files[f"smc_trace_{method}_{quantity}.csv"] = artifacts.smc_trace_text(
            f.model.ensemble, config.digest())
    root = _output_root(args)
    for name, text in files.items():
        artifacts.atomic_write_text(root / name, text)
    for (method, quantity), f in sorted(twin.fits.items()):
        print(f"{method} {quantity}: {len(f.trace)} EM iterations, converged={f.trace.converged}, "
              f"pi={[round(p, 4) for p in f.model.mixing.pi]}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .twin import predict_future

    model_path = Path(args.model) if args.model else _output_root(args) / "twin.json"
    if not model_path.is_file():
        raise UsageError(f"model file not found: {model_path}")
    twin = artifacts.load_twin(model_path)
    if args.overrides:
        config = twin.config
        for text in args.overrides:
            tree = parse_override(text)
            if set(tree) - {"prediction"}:
                raise ConfigError("predict only accepts prediction.* overrides")
            config = from_dict(tree, config)
        twin = replace(twin, config=config)
    forecast = predict_future(twin, with_history=False)
    root = _output_root(args)
    digest = twin.config.digest()
    artifacts.atomic_write_text(root / "predictions.csv",
                                artifacts.predictions_text(forecast, twin.config, twin.simulated))
    artifacts.atomic_write_text(root / "response.csv", artifacts.responses_text(forecast, digest))
    n = len(next(iter(forecast.quantities.values())).t_star)
    print(f"wrote {n} grid points x {len(forecast.quantities)} models to {root / 'predictions.csv'}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    root = _output_root(args)
    base = _config(args)
    if args.suite:
        cells = [(name, from_dict(ov, base)) for name, ov in SUITES[args.suite]()]
    else:
        cells = [(base.name, base)]
    if args.dry_run:
        for name, cfg in cells:
            print(f"{name}: case={cfg.case} tau={cfg.tau} n_obs={cfg.n_obs} sigma0={cfg.sigma0} "
                  f"seed={cfg.seed} -> {root / name}")
        return EXIT_OK
    jobs = [(name, cfg.to_dict(), str(root / name)) for name, cfg in cells]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    rows, failures = [], {}
    for name, cell_rows, error in results:
        rows.extend(cell_rows)
        if error:
            failures[name] = error
            print(f"{name}: FAILED {error}", file=sys.stderr)
        else:
            print(f"{name}: ok")
    root.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([artifacts._fmt(v) for v in row])
    artifacts.atomic_write_text(root / "summary.csv", buf.getvalue())
    failure_path = root / "failures.json"
    if failures:
        artifacts.atomic_write_text(failure_path, json.dumps(failures, sort_keys=True, indent=1) + "\n")
        return EXIT_RUNTIME
    if failure_path.exists():
        failure_path.unlink()
    return EXIT_OK


def cmd_verify(args) -> int:
    target = Path(args.path) if args.path else _output_root(args)
    if not target.is_dir():
        raise UsageError(f"not a directory: {target}")
    problems = artifacts.verify(target)
    for p in problems:
        print(p)
    if problems:
        return EXIT_RUNTIME
    print(f"{target}: ok")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file")
    common.add_argument("--overrides", nargs="+", metavar="KEY=VALUE", default=[],
                        help="dotted config overrides, e.g. em.max_iters=1")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="sdof-twin",
        description="Digital twin of a degrading single-degree-of-freedom oscillator.",
        epilog=describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate noisy frequency observations")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("process", parents=[common], help="invert observations into deltas")
    p.add_argument("--observations", help="observation CSV (default <out>/observations.csv)")
    p.set_defaults(func=cmd_process)
    p = sub.add_parser("train", parents=[common], help="fit ME-GP and baseline models")
    p.add_argument("--observations", help="observation CSV (default <out>/observations.csv)")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("predict", parents=[common], help="predict deltas and responses on the grid")
    p.add_argument("--model", help="twin JSON (default <out>/twin.json)")
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("experiment", parents=[common], help="run full pipelines for a scenario or suite")
    p.add_argument("--suite", choices=sorted(SUITES))
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")
    p.add_argument("--dry-run", action="store_true", help="list planned cells and exit")
    p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("verify", parents=[common], help="check artifact hashes and config digests")
    p.add_argument("path", nargs="?", help="bundle directory (default <out>)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TwinError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
