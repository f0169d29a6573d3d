# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Command implementations behind app.py. Each takes a validated config, writes
its result files and returns the process exit status. stdout carries one line
per result or acceptance check.
"""

from pathlib import Path

import numpy as np
from aws_lambda_powertools import Logger

import constants
from cli.ingest import ingest_csv
from cli.writers import (
    export_dataset, write_curve, write_json, write_records, write_run_metadata, write_tilted_density,
)
from errors import ConfigError
from models import DoseConfig, ExportConfig, RunConfig, SimulationConfig
from simlab.dgps import generate_dataset, get_dgp
from simlab.experiments import (
    edge_bias_profile, run_bounds_experiment, run_coverage_experiment, run_edge_rate_experiment,
    run_rate_experiment, run_remainder_experiment,
)
from tilting.dose_response import estimate_at_point, estimate_edge
from tilting.estimator import CrossFitter, estimate_curve, tilted_marginal_density
from tilting.tilt_core import TiltSpec

logger = Logger(service="tiltwise", child=True)


def status_line(passed: bool, label: str) -> str:
    return f"{'PASS' if passed else 'FAIL'} {label}"


def run_analysis(config: RunConfig) -> int:
    """
    Function to estimate the incremental effect curve of a CSV dataset and write
    curve.csv and run.json (plus tilted_density.csv on request).
    """
    data, report = ingest_csv(config.input_path, config)
    deltas = np.sort(config.delta_grid())
    fitter = CrossFitter(data, config.estimator_config(constants.config))
    estimates = estimate_curve(data, deltas, fitter=fitter)

    out_dir = Path(config.out_dir)
    write_curve(out_dir / "curve.csv", estimates)
    if config.tilted_densities:
        write_tilted_density(out_dir / "tilted_density.csv", fitter.grid, deltas,
                             tilted_marginal_density(fitter, deltas), data)
    write_run_metadata(
        out_dir / "run.json", config, config.seed,
        ingest=report,
        diagnostics=[{"delta": e.delta, **e.diagnostics.model_dump(mode="json")} for e in estimates],
    )
    logger.info("Analysis finished", extra={"out_dir": str(out_dir), "deltas": len(estimates), "rows": data.n})
    print(f"wrote {out_dir / 'curve.csv'} ({len(estimates)} deltas, n={data.n})")
    return 0


def run_dose(config: DoseConfig) -> int:
    """
    Function to estimate the dose-response at a support edge or, with target
    "point", at the interior treatment value config.at (original units).
    """
    data, report = ingest_csv(config.input_path, config)
    estimator_config = config.estimator_config(constants.config)
    if config.target == "point":
        a_prime = config.at
        if data.rescale_record is not None:
            a_min, a_max = data.rescale_record
            a_prime = (config.at - a_min) / (a_max - a_min)
        result = estimate_at_point(data, a_prime, config.c, estimator_config)
    else:
        side = config.target.split("-", 1)[1]
        result = estimate_edge(data, side, config.c, estimator_config)

    out_dir = Path(config.out_dir)
    write_json(out_dir / "dose.json", result)
    write_run_metadata(out_dir / "run.json", config, config.seed, ingest=report)
    print(f"{result.target} a'={result.a_prime:.6g} estimate={result.estimate:.6g} se={result.se:.6g} delta={result.delta_used:.6g}")
    return 0


def _simulate_rate(dgp, config: SimulationConfig, estimator_config):
    report = run_rate_experiment(dgp, config.deltas, config.ns, config.replications, config.oracle_nuisances,
                                 estimator_config, config.seed, config.mc_x)
    checks = [(s.passed, f"rmse slope vs {s.axis} at {'n' if s.axis == 'delta' else 'delta'}={s.fixed_at:g}: "
                         f"{s.slope:.3f} (target {s.target:.3f} +/- {s.tolerance:.3f})") for s in report.slopes]
    return report.cells, report, checks


def _simulate_coverage(dgp, config: SimulationConfig, estimator_config):
    report = run_coverage_experiment(dgp, TiltSpec(config.deltas[0]), config.n, config.replications,
                                     estimator_config, config.oracle_nuisances, config.seed, config.mc_x)
    label = (f"coverage at delta={report.delta:g}, n={report.n}: {report.coverage:.3f} "
             f"(target [{report.lower_target:.2f}, {report.upper_target:.2f}])")
    return [report], report, [(report.passed, label)]


def _simulate_bounds(dgp, config: SimulationConfig, estimator_config):
    rows = run_bounds_experiment(dgp, config.deltas, config.mc_x, config.seed)
    checks = [(r.passed, f"efficiency bound at delta={r.delta:g}: {r.lower:.4g} <= {r.efficiency_bound:.4g} <= {r.upper:.4g}")
              for r in rows]
    return rows, {"dgp": dgp.name, "rows": [r.model_dump(mode="json") for r in rows]}, checks


def _simulate_remainder(dgp, config: SimulationConfig, estimator_config):
    rows, ratios = run_remainder_experiment(dgp, config.epsilons, TiltSpec(config.deltas[0]), config.mc_x, config.seed)
    checks = [(c.passed, f"{c.term} ratio at epsilon={c.epsilon:g}: {c.ratio:.3f} "
                         f"(target [{c.lower_target:.1f}, {c.upper_target:.1f}])") for c in ratios]
    summary = {"dgp": dgp.name, "checks": [c.model_dump(mode="json") for c in ratios]}
    return rows, summary, checks


def _simulate_edge(dgp, config: SimulationConfig, estimator_config):
    report = run_edge_rate_experiment(dgp, config.ns, config.replications, config.c, "upper",
                                      config.oracle_nuisances, estimator_config, config.seed, config.mc_x)
    bias = edge_bias_profile(dgp, [d for d in config.deltas if d > 0], config.mc_x, config.seed)
    checks = [(report.slope.passed, f"edge rmse slope vs n: {report.slope.slope:.3f} "
                                    f"(target {report.slope.target:.3f} +/- {report.slope.tolerance:.3f})")]
    checks += [(row.passed, f"edge bias at delta={row.delta:g}: {row.bias:.4g} <= {row.bound:.4g}") for row in bias]
    summary = {**report.model_dump(mode="json"), "bias_profile": [row.model_dump(mode="json") for row in bias]}
    return report.cells, summary, checks


EXPERIMENTS = {
    "rate": _simulate_rate,
    "coverage": _simulate_coverage,
    "bounds": _simulate_bounds,
    "remainder": _simulate_remainder,
    "edge": _simulate_edge,
}


def run_simulation(config: SimulationConfig) -> int:
    """
    Function to run one simulation experiment, write report.csv, summary.json
    and run.json, and print pass/fail lines. With check set, any failure gives
    exit status 1.
    """
    if config.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    dgp = get_dgp(config.dgp)
    rows, summary, checks = EXPERIMENTS[config.experiment](dgp, config, config.estimator_config(constants.config))

    out_dir = Path(config.out_dir)
    write_records(out_dir / "report.csv", rows)
    write_json(out_dir / "summary.json", summary)
    write_run_metadata(out_dir / "run.json", config, config.seed)
    for passed, label in checks:
        print(status_line(passed, label))
    failed = sum(1 for passed, _ in checks if not passed)
    logger.info("Simulation finished", extra={"experiment": config.experiment, "checks": len(checks), "failed": failed})
    return 1 if config.check and failed else 0


def run_simulate_data(config: ExportConfig) -> int:
    """
    Function to draw a dataset from a built-in DGP and export it as CSV.
    """
    data = generate_dataset(get_dgp(config.dgp), config.n, config.seed)
    export_dataset(config.out, data)
    print(f"wrote {config.out} (n={data.n}, dgp={config.dgp})")
    return 0
