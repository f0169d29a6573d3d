# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W0613,W1203,W0718

#!/usr/bin/env python3

"""
Command line entry point for tiltwise: analyze, dose, simulate and simulate-data.
Settings resolve as built-in defaults < --config JSON document < flags.
"""
import argparse
import json
import logging
import sys
from typing import Callable, Optional

from aws_lambda_powertools import Logger
from pydantic import ValidationError

from cli.commands import run_analysis, run_dose, run_simulate_data, run_simulation
from constants import DOSE_DEFAULTS, LOG_LEVEL, RUN_DEFAULTS, SERVICE_NAME, SIMULATION_DEFAULTS
from errors import ConfigError, TiltwiseError
from models import DoseConfig, ExportConfig, RunConfig, SimulationConfig

logger = Logger(service=SERVICE_NAME, level=LOG_LEVEL, logger_handler=logging.StreamHandler(sys.stderr))


def float_list(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def int_list(text: str) -> list[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def name_list(text: str):
    if text.strip() == "rest":
        return "rest"
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_estimation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest="config_file", help="JSON document with settings; flags override it")
    parser.add_argument("--folds", type=int)
    parser.add_argument("--bandwidths", type=float_list, help="comma separated candidate bandwidths")
    parser.add_argument("--bandwidth", type=float, help="fixed bandwidth, skips cross-validation")
    parser.add_argument("--design-points", dest="design_points", type=int, help="design points per unit of treatment")
    parser.add_argument("--outcome-learner", dest="outcome_learner", choices=["nadaraya_watson", "knn", "ridge"])
    parser.add_argument("--density-learner", dest="density_learner", choices=["nadaraya_watson", "knn", "ridge"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--no-boundary-correction", dest="boundary_correction", action="store_false")
    parser.add_argument("--support-gap", dest="support_gap", type=float, help="split the support at gaps wider than this fraction of the treatment range (default 0.1)")
    parser.add_argument("--threads", type=int)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", dest="input_path")
    parser.add_argument("--outcome")
    parser.add_argument("--treatment")
    parser.add_argument("--covariates", type=name_list, help="comma separated; default is every other column")
    parser.add_argument("--no-rescale", dest="rescale", action="store_false")
    parser.add_argument("--log-outcome", dest="log_outcome", action="store_true")
    parser.add_argument("--log-treatment", dest="log_treatment", action="store_true")
    parser.add_argument("--out", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    """
    Function to build the argument parser. Flags default to SUPPRESS so only
    the ones given on the command line override the config document.
    """
    parser = argparse.ArgumentParser(prog="tiltwise", description="Incremental effects under exponential tilts",
                                     argument_default=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    analyze = commands.add_parser("analyze", help="estimate psi(delta) over a delta grid",
                                  argument_default=argparse.SUPPRESS)
    _add_data_flags(analyze)
    _add_estimation_flags(analyze)
    analyze.add_argument("--delta-min", dest="delta_min", type=float)
    analyze.add_argument("--delta-max", dest="delta_max", type=float)
    analyze.add_argument("--delta-steps", dest="delta_steps", type=int)
    analyze.add_argument("--deltas", type=float_list, help="comma separated explicit delta grid")
    analyze.add_argument("--tilted-densities", dest="tilted_densities", action="store_true")

    dose = commands.add_parser("dose", help="dose-response at a support edge or interior point",
                               argument_default=argparse.SUPPRESS)
    dose.add_argument("target", choices=["edge-upper", "edge-lower", "point"])
    _add_data_flags(dose)
    _add_estimation_flags(dose)
    dose.add_argument("--at", type=float, help="treatment value, original units")
    dose.add_argument("--c", type=float, help="delta = c * n^(1/3)")

    simulate = commands.add_parser("simulate", help="Monte Carlo checks against oracle truth",
                                   argument_default=argparse.SUPPRESS)
    simulate.add_argument("experiment", choices=["rate", "coverage", "bounds", "remainder", "edge"])
    _add_estimation_flags(simulate)
    simulate.add_argument("--dgp")
    simulate.add_argument("--deltas", type=float_list)
    simulate.add_argument("--ns", type=int_list)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--replications", type=int)
    simulate.add_argument("--epsilons", type=float_list)
    simulate.add_argument("--c", type=float)
    simulate.add_argument("--mc-x", dest="mc_x", type=int)
    simulate.add_argument("--estimated-nuisances", dest="oracle_nuisances", action="store_false")
    simulate.add_argument("--assert", dest="check", action="store_true", help="exit 1 when any check fails")
    simulate.add_argument("--out", dest="out_dir")

    export = commands.add_parser("simulate-data", help="export a simulated dataset as CSV",
                                 argument_default=argparse.SUPPRESS)
    export.add_argument("--dgp", required=True)
    export.add_argument("--n", type=int, required=True)
    export.add_argument("--seed", type=int, default=0)
    export.add_argument("--out", required=True)
    return parser


def load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as stream:
            document = json.load(stream)
    except (OSError, json.JSONDecodeError) as error:
        raise ConfigError(f"cannot read config {path}: {error}") from error
    if not isinstance(document, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return document


COMMANDS: dict[str, tuple[dict, type, Callable[..., int]]] = {
    "analyze": (RUN_DEFAULTS, RunConfig, run_analysis),
    "dose": (DOSE_DEFAULTS, DoseConfig, run_dose),
    "simulate": (SIMULATION_DEFAULTS, SimulationConfig, run_simulation),
    "simulate-data": ({}, ExportConfig, run_simulate_data),
}


def resolve_config(args: argparse.Namespace):
    """
    Function to merge defaults, the config document and the given flags into a
    validated config model.
    """
    flags = vars(args).copy()
    command = flags.pop("command")
    document = load_config_file(flags.pop("config_file", None))
    defaults, model, _ = COMMANDS[command]
    return model(**{**defaults, **document, **flags})


def report_error(error: Exception) -> None:
    if isinstance(error, ValidationError):
        message = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in error.errors())
    else:
        message = str(error)
    print(json.dumps({"error": type(error).__name__, "message": message}), file=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command][2](config)
    except (TiltwiseError, ValidationError, ValueError, OSError) as error:
        logger.error("Command failed", extra={"command": args.command, "error": type(error).__name__})
        report_error(error)
        return 1


if __name__ == "__main__":
    sys.exit(main())
