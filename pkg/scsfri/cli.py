from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

from scsfri.errors import InputError, NumericalError
from scsfri.estimator import METHODS, scs_fri
from scsfri.harness import crb_table, run_experiment_a, run_experiment_b, run_experiment_c, simulate
from scsfri.models import ExperimentConfig, config_hash, load_config
from scsfri.pilots import mutual_projection_residual, wht_dft_pilot_map
from scsfri.results import ResultTable, coefficient_table, read_coefficients, write_table
from scsfri.settings import Settings, get_settings

logger = logging.getLogger("scsfri.cli")

EXPERIMENTS: dict[str, Callable[..., ResultTable]] = {
    "a": run_experiment_a,
    "b": run_experiment_b,
    "c": run_experiment_c,
}


def _print_json(data: Any) -> None:
    print(json.dumps(data, separators=(",", ":"), sort_keys=False))


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=getattr(args, "seed", None), trials=getattr(args, "trials", None))


def _out_dir(args: argparse.Namespace, settings: Settings) -> Path:
    return Path(args.out or settings.out_dir)


def _write(table: ResultTable, args: argparse.Namespace, settings: Settings, cfg: ExperimentConfig) -> str:
    path = write_table(table, _out_dir(args, settings), args.format, seed=cfg.seed, config_hash=config_hash(cfg))
    return str(path)


def _handle_simulate(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _config(args)
    result = simulate(cfg, args.snr)
    real = result.realization

    channel = ResultTable(name="channel", columns=("path", "antenna", "toa", "re", "im"))
    for k in range(real.K):
        for p in range(real.P):
            gain = real.gains[k, p]
            channel.add(k, p, float(real.toas[k, p]), float(gain.real), float(gain.imag))

    samples = ResultTable(name="samples", columns=("n", "antenna", "re", "im"))
    for n, row in enumerate(result.samples):
        for p, value in enumerate(row):
            samples.add(n, p, float(value.real), float(value.imag))

    written = [
        _write(channel, args, settings, cfg),
        _write(samples, args, settings, cfg),
        _write(coefficient_table(result.coefficients, result.grid), args, settings, cfg),
    ]
    _print_json({"sigma2": result.sigma2, "files": written, "config_hash": config_hash(cfg)})
    return 0


def _handle_estimate(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _config(args)
    grid, coeffs = read_coefficients(args.coefficients)
    kernel = cfg.kernel.to_kernel()
    layout = cfg.pilots.to_layout()
    estimate = scs_fri(
        coeffs,
        args.K or cfg.estimator.K,
        args.method or cfg.estimator.method,
        cfg.estimator.cadzow_iters if args.cadzow_iters is None else args.cadzow_iters,
        layout.D,
        kernel.tau,
        grid=grid,
        L=cfg.estimator.L,
    )
    _print_json(
        {
            "toas": [float(t) for t in estimate.support.toas],
            "amplitudes": [[[float(c.real), float(c.imag)] for c in row] for row in estimate.amplitudes],
            "warnings": list(estimate.warnings),
        }
    )
    return 0


def _handle_crb(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _config(args)
    _print_json({"file": _write(crb_table(cfg), args, settings, cfg)})
    return 0


def _handle_experiment(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _config(args)
    table = EXPERIMENTS[args.name](cfg, threads=settings.threads)
    _print_json({"file": _write(table, args, settings, cfg), "rows": len(table.rows)})
    return 0


def _handle_wht_map(args: argparse.Namespace, settings: Settings) -> int:
    wht, dft = wht_dft_pilot_map(args.n, args.ell)
    _print_json(
        {
            "n": args.n,
            "ell": args.ell,
            "wht": wht,
            "dft": dft,
            "residual": mutual_projection_residual(args.n, args.ell),
        }
    )
    return 0


def _add_common(parser: argparse.ArgumentParser, *, trials: bool = False, output: bool = True) -> None:
    parser.add_argument("--config", type=str, help="TOML experiment config (default: the packaged reference frame)")
    parser.add_argument("--seed", type=int)
    if trials:
        parser.add_argument("--trials", type=int)
    if output:
        parser.add_argument("--out", type=str)
        parser.add_argument("--format", choices=("csv", "dat"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scsfri")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate_parser = subparsers.add_parser("simulate")
    _add_common(simulate_parser)
    simulate_parser.add_argument("--snr", type=float, default=20.0)
    simulate_parser.set_defaults(handler=_handle_simulate)

    estimate_parser = subparsers.add_parser("estimate")
    estimate_parser.add_argument("coefficients", type=str)
    _add_common(estimate_parser, output=False)
    estimate_parser.add_argument("--K", type=int)
    estimate_parser.add_argument("--method", choices=METHODS)
    estimate_parser.add_argument("--cadzow-iters", dest="cadzow_iters", type=int)
    estimate_parser.set_defaults(handler=_handle_estimate)

    crb_parser = subparsers.add_parser("crb")
    _add_common(crb_parser)
    crb_parser.set_defaults(handler=_handle_crb)

    experiment_parser = subparsers.add_parser("experiment")
    experiment_parser.add_argument("name", choices=sorted(EXPERIMENTS))
    _add_common(experiment_parser, trials=True)
    experiment_parser.set_defaults(handler=_handle_experiment)

    wht_parser = subparsers.add_parser("wht-map")
    wht_parser.add_argument("n", type=int)
    wht_parser.add_argument("ell", type=int)
    wht_parser.set_defaults(handler=_handle_wht_map)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = get_settings()
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    logging.basicConfig(
        level=settings.log_level_value,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return int(args.handler(args, settings))
    except InputError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        print(str(exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
