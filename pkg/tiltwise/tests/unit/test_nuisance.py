# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W1203,W0718

"""
This module contains test cases for the cross-fitted nuisance fits.
"""

import math

import numpy as np
import pytest

import constants
from errors import CrossFitLeak, DegenerateFold, EmptyCandidateSet, NonpositiveBandwidth, OverflowRisk
from simlab.dgps import generate_dataset, get_dgp
from tilting.dataset import Dataset
from tilting.learners import NadarayaWatson, Ridge, make_learner
from tilting.nuisance import (
    fit_conditional_density, fit_nu_eta, fit_outcome_regression, kernel_mass, kernel_transform_targets,
    select_bandwidth_cv,
)
from tilting.tilt_core import SupportGrid, TiltSpec


@pytest.fixture(scope="module")
def uniform_data():
    rng = np.random.default_rng(11)
    covariates = rng.uniform(size=(1500, 1))
    treatment = rng.uniform(size=1500)
    outcome = treatment + 0.25 * rng.standard_normal(1500)
    return Dataset.from_arrays(covariates, treatment, outcome, rescale=False)


@pytest.fixture(scope="module")
def grid():
    return SupportGrid.unit(points_per_unit=20)


def test_kernel_targets_shape_and_values():
    targets = kernel_transform_targets([0.0, 0.5], np.array([0.0, 0.25, 0.5]), 0.5)
    assert targets.shape == (2, 3)
    assert targets[0, 0] == pytest.approx(2.0 / math.sqrt(2.0 * math.pi))
    assert targets[1, 2] == pytest.approx(targets[0, 0])
    assert targets[0, 1] == pytest.approx(targets[1, 1])


def test_kernel_targets_reject_nonpositive_bandwidth():
    with pytest.raises(NonpositiveBandwidth):
        kernel_transform_targets([0.1], [0.1], 0.0)


def test_kernel_mass_halves_at_the_edge(grid):
    mass = kernel_mass(grid, 0.01)
    assert mass[0] == pytest.approx(0.5, abs=1e-6)
    assert mass[grid.size // 2] == pytest.approx(1.0, abs=1e-6)


def test_outcome_regression_needs_enough_rows(uniform_data):
    with pytest.raises(DegenerateFold):
        fit_outcome_regression(NadarayaWatson(), uniform_data, np.arange(10))


def test_outcome_regression_rejects_constant_outcome():
    data = Dataset.from_arrays(np.zeros((50, 1)), np.linspace(0, 1, 50), np.ones(50), rescale=False)
    with pytest.raises(DegenerateFold):
        fit_outcome_regression(Ridge(), data, np.arange(50))


def test_outcome_regression_and_leak_guard(uniform_data):
    train = np.arange(1000)
    model = fit_outcome_regression(Ridge(), uniform_data, train, fold_id=0)
    predicted = model.predict(np.array([[0.5]]), np.array([0.5]))
    assert predicted[0] == pytest.approx(0.5, abs=0.05)
    assert model.predict_grid(np.array([[0.5], [0.2]]), SupportGrid.unit(10, 2)).shape == (2, 11)
    model.assert_held_out(np.arange(1000, 1500))
    with pytest.raises(CrossFitLeak):
        model.assert_held_out(np.array([3, 1200]))


def test_boundary_corrected_density_is_flat(uniform_data, grid):
    model = fit_conditional_density(Ridge(), uniform_data, grid, 0.1, np.arange(uniform_data.n),
                                    boundary_correction=True)
    values = model.evaluate_grid(np.array([[0.5]]))[0]
    np.testing.assert_allclose(values, 1.0, atol=0.2)
    uncorrected = fit_conditional_density(Ridge(), uniform_data, grid, 0.1, np.arange(uniform_data.n))
    edge = uncorrected.evaluate_grid(np.array([[0.5]]))[0, 0]
    assert edge == pytest.approx(0.5, abs=0.15)
    assert model.evaluate([0.5]).values.shape == (grid.size,)


def test_density_fit_rejects_nonpositive_bandwidth(uniform_data, grid):
    with pytest.raises(NonpositiveBandwidth):
        fit_conditional_density(NadarayaWatson(), uniform_data, grid, -0.1, np.arange(100))


def test_bandwidth_cv_candidate_checks(uniform_data, grid):
    with pytest.raises(EmptyCandidateSet):
        select_bandwidth_cv(uniform_data, grid, [], 5)
    with pytest.raises(NonpositiveBandwidth):
        select_bandwidth_cv(uniform_data, grid, [0.1, 0.0], 5)
    assert select_bandwidth_cv(uniform_data, grid, [0.3, 0.3], 5) == 0.3


def test_bandwidth_cv_prefers_smooth_fit_for_flat_density(uniform_data, grid):
    chosen = select_bandwidth_cv(uniform_data, grid, [0.01, 0.5], 5, boundary_correction=True)
    assert chosen == 0.5


def test_nu_eta_regressions(uniform_data):
    mu = fit_outcome_regression(Ridge(), uniform_data, np.arange(uniform_data.n))
    nu_model, eta_model = fit_nu_eta(Ridge(), uniform_data, TiltSpec(1.0), mu, np.arange(uniform_data.n))
    x = np.array([[0.5]])
    assert nu_model.predict(x)[0] == pytest.approx(math.e - 1.0, abs=0.15)
    # E[A exp(A)] over the uniform is 1
    assert eta_model.predict(x)[0] == pytest.approx(1.0, abs=0.15)


def test_nu_eta_overflow_guard(uniform_data):
    mu = fit_outcome_regression(Ridge(), uniform_data, np.arange(uniform_data.n))
    with pytest.raises(OverflowRisk):
        fit_nu_eta(Ridge(), uniform_data, TiltSpec(400.0), mu, np.arange(uniform_data.n))


def test_nu_eta_checks_fold_before_overflow(uniform_data):
    mu = fit_outcome_regression(Ridge(), uniform_data, np.arange(uniform_data.n))
    with pytest.raises(DegenerateFold):
        fit_nu_eta(Ridge(), uniform_data, TiltSpec(400.0), mu, np.arange(10))


def test_default_outcome_regression_is_unbiased_at_the_edges():
    rng = np.random.default_rng(4)
    treatment = rng.uniform(size=2000)
    data = Dataset.from_arrays(rng.uniform(size=(2000, 1)), treatment, treatment.copy(), rescale=False)
    model = fit_outcome_regression(make_learner(constants.config.outcome_learner), data, np.arange(data.n))
    grid = SupportGrid.unit(points_per_unit=50)
    predicted = model.predict_grid(np.array([[0.05], [0.5], [0.95]]), grid)
    assert np.max(np.abs(predicted - grid.points[None, :])) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_bandwidth_cv_picks_interior_bandwidth(seed):
    data = generate_dataset(get_dgp("logistic"), 2000, seed=seed)
    candidates = constants.BANDWIDTHS
    chosen = select_bandwidth_cv(data, SupportGrid.unit(points_per_unit=20), candidates, 5, seed=seed,
                                 boundary_correction=True)
    assert min(candidates) < chosen < max(candidates)
