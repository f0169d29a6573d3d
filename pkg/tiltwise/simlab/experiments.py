# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Monte Carlo experiments comparing the estimators with the oracle truth.
Each replication draws its data from its own SeedSequence child, so results do
not depend on how replications are scheduled across workers.
"""

from typing import Literal, Optional, Sequence

import numpy as np
from aws_lambda_powertools import Logger
from joblib import Parallel, delayed

import constants
from constants import (
    COVERAGE_ESTIMATED, COVERAGE_ORACLE, DOSE_SCHEDULE_C, EDGE_N_SLOPE, ORACLE_MC_X, RATE_DELTA_SLOPE,
    RATE_N_SLOPE, REMAINDER_RATIO,
)
from errors import MissingBoundDeclaration
from models import (
    BoundsRow, CoverageReport, EdgeBiasRow, EdgeRateCell, EdgeRateReport, EstimatorConfig, RateCell,
    RateReport, RemainderCheck, RemainderRow, SlopeCheck,
)
from simlab.dgps import DGPSpec, generate_dataset
from simlab.oracles import (
    oracle_dose_edge, oracle_efficiency_bound, oracle_nuisances, oracle_psi, remainder_diagnostic, variance_bounds,
)
from tilting.dose_response import edge_bias_bound, estimate_edge
from tilting.estimator import CrossFitter, estimate_curve
from tilting.tilt_core import TiltSpec

logger = Logger(service="tiltwise", child=True)


def replication_seeds(master_seed: int, key: int, count: int) -> list:
    return np.random.SeedSequence([master_seed, key]).spawn(count)


def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y on log x."""
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])


def _slope_check(axis, fixed_at, x, y, target) -> SlopeCheck:
    slope = log_log_slope(x, y)
    centre, tolerance = target
    return SlopeCheck(axis=axis, fixed_at=float(fixed_at), slope=slope, target=centre, tolerance=tolerance,
                      passed=bool(abs(slope - centre) <= tolerance))


def _fitter(dgp: DGPSpec, data, config: EstimatorConfig, oracle: bool) -> CrossFitter:
    nuisances = oracle_nuisances(dgp) if oracle else None
    return CrossFitter(data, config, nuisances, grid=dgp.grid(config.points_per_unit))


def _curve_replication(dgp: DGPSpec, n: int, deltas: np.ndarray, seed, config: EstimatorConfig, oracle: bool) -> list:
    data = generate_dataset(dgp, n, seed)
    fitter = _fitter(dgp, data, config, oracle)
    return estimate_curve(data, deltas, fitter=fitter)


def run_rate_experiment(dgp: DGPSpec, deltas: Sequence[float], ns: Sequence[int], seeds: int,
                        oracle_nuisances: bool = True, config: Optional[EstimatorConfig] = None,
                        master_seed: int = 0, mc_x: int = ORACLE_MC_X) -> RateReport:
    """
    Function to tabulate the RMSE of psi_hat over an (n, delta) lattice and fit
    log-log slopes along each axis. Along delta the RMSE of an efficient
    estimator follows sqrt(V(delta) / n), with V the efficiency bound. V grows
    like delta only once the tilt is steep, so the delta slope is checked
    against the slope of sqrt(V) over the same deltas.
    """
    config = config or constants.config
    grid = np.sort(np.asarray(list(deltas), dtype=float))
    truth = {delta: oracle_psi(dgp, TiltSpec(delta), mc_x, seed=master_seed).value for delta in grid}
    bound = {delta: oracle_efficiency_bound(dgp, TiltSpec(delta), mc_x, seed=master_seed).value for delta in grid}
    cells = []
    for n in ns:
        logger.info("Rate experiment cell", extra={"dgp": dgp.name, "n": int(n), "replications": seeds})
        runs = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_curve_replication)(dgp, int(n), grid, seed, config, oracle_nuisances)
            for seed in replication_seeds(master_seed, int(n), seeds)
        )
        for j, delta in enumerate(grid):
            errors = np.array([run[j].psi_hat for run in runs]) - truth[delta]
            cells.append(RateCell(n=int(n), delta=float(delta), replications=seeds, oracle_psi=truth[delta],
                                  rmse=float(np.sqrt(np.mean(errors ** 2))), mean_error=float(errors.mean()),
                                  efficient_rmse=float(np.sqrt(bound[delta] / n))))

    slopes = []
    positive = [delta for delta in grid if delta > 0]
    if len(positive) >= 2:
        expected = (log_log_slope(positive, [np.sqrt(bound[delta]) for delta in positive]), RATE_DELTA_SLOPE[1])
        for n in ns:
            row = [cell for cell in cells if cell.n == n and cell.delta > 0]
            slopes.append(_slope_check("delta", n, [c.delta for c in row], [c.rmse for c in row], expected))
    if len(ns) >= 2:
        for delta in grid:
            column = [cell for cell in cells if cell.delta == delta]
            slopes.append(_slope_check("n", delta, [c.n for c in column], [c.rmse for c in column], RATE_N_SLOPE))
    return RateReport(dgp=dgp.name, oracle_nuisances=oracle_nuisances, cells=cells, slopes=slopes)


def _interval_replication(dgp: DGPSpec, n: int, tilt: TiltSpec, seed, config: EstimatorConfig, oracle: bool):
    data = generate_dataset(dgp, n, seed)
    return _fitter(dgp, data, config, oracle).estimate(tilt)


def run_coverage_experiment(dgp: DGPSpec, tilt: TiltSpec, n: int, seeds: int,
                            config: Optional[EstimatorConfig] = None, oracle_nuisances: bool = False,
                            master_seed: int = 0, mc_x: int = ORACLE_MC_X) -> CoverageReport:
    """
    Function to measure how often the Wald interval covers the oracle psi(delta).
    """
    if seeds < 100:
        raise ValueError(f"coverage needs at least 100 replications, got {seeds}")
    config = config or constants.config
    truth = oracle_psi(dgp, tilt, mc_x, seed=master_seed).value
    estimates = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_interval_replication)(dgp, n, tilt, seed, config, oracle_nuisances)
        for seed in replication_seeds(master_seed, n, seeds)
    )
    covered = np.array([e.ci_lower <= truth <= e.ci_upper for e in estimates])
    lower, upper = COVERAGE_ORACLE if oracle_nuisances else COVERAGE_ESTIMATED
    coverage = float(covered.mean())
    logger.info("Coverage experiment finished", extra={"dgp": dgp.name, "delta": tilt.delta, "coverage": coverage})
    return CoverageReport(
        dgp=dgp.name,
        delta=tilt.delta,
        n=n,
        replications=seeds,
        oracle_psi=truth,
        coverage=coverage,
        mean_psi_hat=float(np.mean([e.psi_hat for e in estimates])),
        mean_se=float(np.mean([e.se for e in estimates])),
        oracle_nuisances=oracle_nuisances,
        lower_target=lower,
        upper_target=upper,
        passed=bool(lower <= coverage <= upper),
    )


def run_bounds_experiment(dgp: DGPSpec, deltas: Sequence[float], mc_x: int = ORACLE_MC_X, seed: int = 0) -> list[BoundsRow]:
    """
    Function to check the efficiency bound against its variance envelopes.
    """
    rows = []
    for delta in deltas:
        tilt = TiltSpec(delta)
        bound = oracle_efficiency_bound(dgp, tilt, mc_x, seed=seed)
        envelope = variance_bounds(dgp, tilt)
        rows.append(BoundsRow(
            dgp=dgp.name, delta=tilt.delta, lower=envelope.lower, efficiency_bound=bound.value,
            mc_se=bound.mc_se, upper=envelope.upper,
            passed=bool(envelope.lower <= bound.value <= envelope.upper),
        ))
    return rows


def run_remainder_experiment(dgp: DGPSpec, epsilons: Sequence[float], tilt: TiltSpec,
                             mc_x: int = ORACLE_MC_X, seed: int = 0) -> tuple[list[RemainderRow], list[RemainderCheck]]:
    """
    Function to evaluate the remainder at each epsilon and at epsilon / 2, and
    check that both terms shrink four-fold.
    """
    rows, checks = [], []
    lower, upper = REMAINDER_RATIO
    for epsilon in epsilons:
        full = remainder_diagnostic(dgp, epsilon, tilt, mc_x, seed=seed)
        half = remainder_diagnostic(dgp, epsilon / 2.0, tilt, mc_x, seed=seed)
        for value, terms in ((epsilon, full), (epsilon / 2.0, half)):
            rows.append(RemainderRow(dgp=dgp.name, delta=tilt.delta, epsilon=value, **terms._asdict()))
        for term in ("r1", "r2"):
            numerator, denominator = abs(getattr(full, term)), abs(getattr(half, term))
            ratio = numerator / denominator if denominator > 0 else float("inf")
            checks.append(RemainderCheck(epsilon=epsilon, term=term, ratio=ratio, lower_target=lower,
                                         upper_target=upper, passed=bool(lower <= ratio <= upper)))
    return rows, checks


def edge_bias_profile(dgp: DGPSpec, deltas: Sequence[float], mc_x: int = ORACLE_MC_X, seed: int = 0) -> list[EdgeBiasRow]:
    """
    |psi(delta) - E[Y^1]| against the (L pi_max / pi_min) / delta bound.
    """
    if dgp.lipschitz is None or dgp.pi_min is None or dgp.pi_max is None:
        raise MissingBoundDeclaration(f"DGP {dgp.name!r} needs lipschitz, pi_min and pi_max for the edge bias bound")
    edge = oracle_dose_edge(dgp, "upper", mc_x, seed=seed).value
    rows = []
    for delta in deltas:
        bias = abs(oracle_psi(dgp, TiltSpec(delta), mc_x, seed=seed).value - edge)
        bound = edge_bias_bound(dgp.lipschitz, dgp.pi_max, dgp.pi_min, delta)
        rows.append(EdgeBiasRow(delta=float(delta), bias=bias, bound=bound.bound, refined=bound.refined,
                                passed=bool(bias <= bound.bound)))
    return rows


def _edge_replication(dgp: DGPSpec, n: int, side: str, c: float, seed, config: EstimatorConfig, oracle: bool) -> float:
    data = generate_dataset(dgp, n, seed)
    return estimate_edge(data, side, c, config, oracle_nuisances(dgp) if oracle else None).estimate


def run_edge_rate_experiment(dgp: DGPSpec, ns: Sequence[int], seeds: int, c: float = DOSE_SCHEDULE_C,
                             side: Literal["upper", "lower"] = "upper", oracle_nuisances: bool = True,
                             config: Optional[EstimatorConfig] = None, master_seed: int = 0,
                             mc_x: int = ORACLE_MC_X) -> EdgeRateReport:
    """
    Function to tabulate the RMSE of the edge dose-response estimate over n and
    fit its log-log slope, which should sit near -1/3.
    """
    config = config or constants.config
    truth = oracle_dose_edge(dgp, side, mc_x, seed=master_seed).value
    cells = []
    for n in ns:
        estimates = np.array(Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_edge_replication)(dgp, int(n), side, c, seed, config, oracle_nuisances)
            for seed in replication_seeds(master_seed, int(n), seeds)
        ))
        errors = estimates - truth
        cells.append(EdgeRateCell(n=int(n), delta=c * int(n) ** (1.0 / 3.0), replications=seeds, truth=truth,
                                  rmse=float(np.sqrt(np.mean(errors ** 2))), mean_error=float(errors.mean())))
    slope = _slope_check("n", c, [cell.n for cell in cells], [cell.rmse for cell in cells], EDGE_N_SLOPE)
    return EdgeRateReport(dgp=dgp.name, side=side, c=c, cells=cells, slope=slope)
