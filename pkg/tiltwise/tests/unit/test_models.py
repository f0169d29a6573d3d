# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W1203,W0718

"""
This module contains test cases for the configuration and record models.
"""

import numpy as np
import pytest
from pydantic import ValidationError

import constants
from models import (
    DoseConfig, DoseResponseEstimate, EstimateDiagnostics, IncrementalEstimate, RunConfig, SimulationConfig,
)


def _run_config(**overrides):
    return RunConfig(**{**constants.RUN_DEFAULTS, "input_path": "d.csv", "outcome": "y", "treatment": "a", **overrides})


def test_default_delta_grid():
    grid = _run_config().delta_grid()
    assert grid.size == constants.DELTA_STEPS
    assert grid[0] == constants.DELTA_MIN and grid[-1] == constants.DELTA_MAX


def test_explicit_deltas_take_precedence():
    np.testing.assert_array_equal(_run_config(deltas=[1.0, -1.0]).delta_grid(), [1.0, -1.0])


@pytest.mark.parametrize("overrides", [
    {"deltas": []},
    {"deltas": [1.0, float("nan")]},
    {"delta_min": 2.0, "delta_max": 1.0},
    {"delta_steps": 0},
    {"bandwidths": [0.1, -0.2]},
    {"alpha": 1.0},
    {"folds": 1},
    {"support_gap": 0.0},
    {"covariates": ["a"]},
])
def test_run_config_rejects(overrides):
    with pytest.raises(ValidationError):
        _run_config(**overrides)


def test_estimator_config_mapping():
    config = _run_config(folds=3, design_points=80, outcome_learner="ridge", threads=2, bandwidth=0.3)
    estimator = config.estimator_config(constants.config)
    assert estimator.folds == 3
    assert estimator.points_per_unit == 80
    assert estimator.outcome_learner.name == "ridge"
    assert estimator.density_learner.name == "nadaraya_watson"
    assert estimator.n_jobs == 2 and estimator.bandwidth == 0.3
    assert estimator.cv_design_points == constants.config.cv_design_points


def test_default_outcome_learner_is_local_linear():
    estimator = _run_config().estimator_config(constants.config)
    assert estimator.outcome_learner.options == {"degree": 1}
    assert estimator.density_learner.options == {}
    assert estimator.support_gap == constants.SUPPORT_GAP
    assert _run_config(outcome_learner="knn").estimator_config(constants.config).outcome_learner.options == {}


def test_estimator_config_is_frozen():
    with pytest.raises(ValidationError):
        constants.config.folds = 3


def test_point_dose_needs_location():
    base = {**constants.DOSE_DEFAULTS, "input_path": "d.csv", "outcome": "y", "treatment": "a"}
    with pytest.raises(ValidationError):
        DoseConfig(**base, target="point")
    assert DoseConfig(**{**base, "at": 0.4}, target="point").at == 0.4


def test_simulation_grids_must_not_be_empty():
    with pytest.raises(ValidationError):
        SimulationConfig(**{**constants.SIMULATION_DEFAULTS, "ns": []}, experiment="rate")


def test_estimate_interval_must_contain_point():
    with pytest.raises(ValidationError):
        IncrementalEstimate(delta=1.0, psi_hat=0.9, sigma2_hat=0.1, se=0.01, ci_lower=0.4, ci_upper=0.6, n=100,
                            alpha=0.05, fold_psi=[0.9], diagnostics=EstimateDiagnostics(bandwidth=0.1))


def test_dose_estimate_must_be_finite():
    with pytest.raises(ValidationError):
        DoseResponseEstimate(target="edge-upper", a_prime=1.0, delta_used=10.0, direction=1, c=1.0,
                             estimate=float("inf"), se=0.1, n=100)
