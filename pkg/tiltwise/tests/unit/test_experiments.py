# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W1203,W0718

"""
This module contains test cases for the Monte Carlo experiments. Long-running
acceptance checks are marked slow and only run with --runslow.
"""

import dataclasses

import numpy as np
import pytest

import constants
from errors import MissingBoundDeclaration
from simlab.dgps import generate_dataset, get_dgp
from simlab.experiments import (
    edge_bias_profile, log_log_slope, replication_seeds, run_bounds_experiment, run_coverage_experiment,
    run_edge_rate_experiment, run_rate_experiment, run_remainder_experiment,
)
from simlab.oracles import oracle_efficiency_bound, oracle_nuisances, oracle_psi, remainder_diagnostic
from tilting.estimator import CrossFitter
from tilting.tilt_core import TiltSpec

UNIFORM = get_dgp("uniform")
MC_X = 10_000
SERIAL = constants.config.model_copy(update={"n_jobs": 1})


def test_log_log_slope_recovers_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert log_log_slope(x, 3.0 * x ** -0.5) == pytest.approx(-0.5)


def test_replication_seeds_are_reproducible():
    first = [np.random.default_rng(s).integers(1 << 30) for s in replication_seeds(0, 500, 4)]
    again = [np.random.default_rng(s).integers(1 << 30) for s in replication_seeds(0, 500, 4)]
    other = [np.random.default_rng(s).integers(1 << 30) for s in replication_seeds(0, 1000, 4)]
    assert first == again
    assert len(set(first)) == 4
    assert first != other


def test_bounds_rows_pass_for_uniform():
    rows = run_bounds_experiment(UNIFORM, [1.0, 4.0, 16.0], mc_x=MC_X)
    assert [row.delta for row in rows] == [1.0, 4.0, 16.0]
    assert all(row.passed for row in rows)
    assert all(row.lower <= row.efficiency_bound <= row.upper for row in rows)


def test_remainder_terms_shrink_quadratically():
    rows, checks = run_remainder_experiment(UNIFORM, [0.05], TiltSpec(2.0), mc_x=MC_X)
    assert [row.epsilon for row in rows] == [0.05, 0.025]
    assert [check.term for check in checks] == ["r1", "r2"]
    for check in checks:
        assert 3.0 < check.ratio < 5.0


def test_edge_bias_profile_respects_bound():
    rows = edge_bias_profile(UNIFORM, [5.0, 10.0, 20.0, 40.0, 80.0], mc_x=MC_X)
    assert all(row.passed for row in rows)
    biases = [row.bias for row in rows]
    assert biases == sorted(biases, reverse=True)
    assert rows[-1].bias == pytest.approx(rows[-1].refined, abs=1e-3)


def test_edge_bias_profile_needs_declared_bounds():
    with pytest.raises(MissingBoundDeclaration):
        edge_bias_profile(dataclasses.replace(UNIFORM, lipschitz=None), [5.0], mc_x=MC_X)


def test_rate_experiment_structure():
    report = run_rate_experiment(UNIFORM, [2.0, 1.0], [200, 400], seeds=3, config=SERIAL, mc_x=MC_X)
    assert report.dgp == "uniform" and report.oracle_nuisances
    assert [(cell.n, cell.delta) for cell in report.cells] == [(200, 1.0), (200, 2.0), (400, 1.0), (400, 2.0)]
    assert all(cell.rmse >= abs(cell.mean_error) for cell in report.cells)
    assert [check.axis for check in report.slopes] == ["delta", "delta", "n", "n"]


def test_rate_experiment_is_reproducible():
    first = run_rate_experiment(UNIFORM, [1.0], [200], seeds=2, config=SERIAL, mc_x=MC_X)
    again = run_rate_experiment(UNIFORM, [1.0], [200], seeds=2, config=SERIAL, mc_x=MC_X)
    assert first.cells[0].rmse == again.cells[0].rmse
    assert not first.slopes


def test_edge_rate_experiment_structure():
    report = run_edge_rate_experiment(UNIFORM, [200, 400], seeds=3, config=SERIAL, mc_x=MC_X)
    assert report.side == "upper"
    assert [cell.n for cell in report.cells] == [200, 400]
    assert report.cells[0].truth == pytest.approx(1.0)
    assert report.cells[1].delta == pytest.approx(400 ** (1.0 / 3.0))
    assert report.slope.axis == "n"


def test_coverage_needs_enough_replications():
    with pytest.raises(ValueError):
        run_coverage_experiment(UNIFORM, TiltSpec(1.0), 500, seeds=50, config=SERIAL)


def test_zero_tilt_equals_sample_mean_with_equal_folds():
    for seed in range(5):
        data = generate_dataset(UNIFORM, 1000, seed=seed)
        fitter = CrossFitter(data, SERIAL, oracle_nuisances(UNIFORM), grid=UNIFORM.grid(200))
        assert fitter.estimate(TiltSpec(0.0)).psi_hat == pytest.approx(data.outcome.mean(), abs=1e-10)


def test_delta_slope_target_follows_efficiency_bound():
    deltas = [1.0, 2.0, 4.0, 8.0, 16.0]
    report = run_rate_experiment(UNIFORM, deltas, [200], seeds=2, config=SERIAL, mc_x=MC_X)
    bounds = [oracle_efficiency_bound(UNIFORM, TiltSpec(delta), mc_x=MC_X).value for delta in deltas]
    check = report.slopes[0]
    assert check.axis == "delta"
    assert check.target == pytest.approx(log_log_slope(deltas, np.sqrt(bounds)))
    # with mu = a the spread of mu under the tilt dominates the bound at small delta
    assert check.target < constants.RATE_DELTA_SLOPE[0] - constants.RATE_DELTA_SLOPE[1]
    assert all(cell.efficient_rmse == pytest.approx(np.sqrt(bound / 200)) for cell, bound in zip(report.cells, bounds))


def test_efficiency_bound_grows_like_delta_for_steep_tilts():
    deltas = [32.0, 64.0, 128.0, 256.0]
    bounds = [oracle_efficiency_bound(UNIFORM, TiltSpec(delta), mc_x=2_000).value for delta in deltas]
    assert log_log_slope(deltas, np.sqrt(bounds)) == pytest.approx(0.5, abs=0.02)


def test_oracle_rmse_matches_efficient_rmse():
    report = run_rate_experiment(UNIFORM, [1.0, 16.0], [1000], seeds=80, config=SERIAL, mc_x=MC_X)
    for cell in report.cells:
        assert 0.7 < cell.rmse / cell.efficient_rmse < 1.3, (cell.delta, cell.rmse, cell.efficient_rmse)


@pytest.mark.slow
def test_rmse_grows_with_delta_at_fixed_n():
    report = run_rate_experiment(UNIFORM, [1.0, 2.0, 4.0, 8.0, 16.0], [4000], seeds=300)
    check = report.slopes[0]
    assert check.axis == "delta"
    assert check.passed, (check.slope, check.target)


@pytest.mark.slow
def test_rmse_shrinks_with_n_at_fixed_delta():
    report = run_rate_experiment(UNIFORM, [2.0], [1000, 2000, 4000, 8000, 16000], seeds=300)
    check = report.slopes[0]
    assert check.axis == "n" and check.target == constants.RATE_N_SLOPE[0]
    assert check.passed, check.slope


@pytest.mark.slow
def test_coverage_with_estimated_nuisances():
    report = run_coverage_experiment(UNIFORM, TiltSpec(1.0), 2000, seeds=500)
    assert report.passed, report.coverage


@pytest.mark.slow
def test_coverage_with_oracle_nuisances():
    report = run_coverage_experiment(UNIFORM, TiltSpec(1.0), 2000, seeds=500, oracle_nuisances=True)
    assert report.passed, report.coverage


@pytest.mark.slow
def test_edge_rmse_exponent():
    report = run_edge_rate_experiment(UNIFORM, [1000, 2000, 4000, 8000, 16000], seeds=200)
    assert report.slope.passed, report.slope.slope


@pytest.mark.slow
def test_zero_tilt_with_estimated_nuisances():
    close = 0
    for seed in range(200):
        data = generate_dataset(UNIFORM, 2000, seed=seed)
        psi_hat = CrossFitter(data, constants.config).estimate(TiltSpec(0.0)).psi_hat
        close += abs(psi_hat - data.outcome.mean()) < 0.02 * data.outcome.std()
    assert close >= 190, close


def _mean_error(nuisances, tilt, n, seeds):
    """Mean error over seeds and its Monte Carlo standard error."""
    truth = oracle_psi(UNIFORM, tilt).value
    errors = []
    for seed in range(seeds):
        data = generate_dataset(UNIFORM, n, seed=seed)
        errors.append(CrossFitter(data, SERIAL, nuisances, grid=UNIFORM.grid(200)).estimate(tilt).psi_hat - truth)
    return float(np.mean(errors)), float(np.std(errors, ddof=1) / np.sqrt(seeds))


@pytest.mark.slow
@pytest.mark.parametrize("delta", [1.0, 4.0])
def test_oracle_estimator_is_unbiased(delta):
    tilt = TiltSpec(delta)
    bias, _ = _mean_error(oracle_nuisances(UNIFORM), tilt, 4000, 300)
    bound = oracle_efficiency_bound(UNIFORM, tilt).value
    assert abs(bias) < 3 * np.sqrt(bound / (4000 * 300))


@pytest.mark.slow
def test_correct_density_absorbs_outcome_bias():
    bias, mc_se = _mean_error(oracle_nuisances(UNIFORM, mu_bias=0.3), TiltSpec(3.0), 1000, 200)
    assert abs(bias) < 4 * mc_se


@pytest.mark.slow
def test_correct_outcome_leaves_second_order_bias_from_density():
    tilt = TiltSpec(2.0)
    bias, mc_se = _mean_error(oracle_nuisances(UNIFORM, density_shift=0.3), tilt, 1000, 300)
    remainder = remainder_diagnostic(UNIFORM, 0.3, tilt, perturb_outcome=False).total
    # the bias is the product remainder, not zero
    assert abs(bias - remainder) < 4 * mc_se
    assert abs(remainder) < 0.3 ** 2
