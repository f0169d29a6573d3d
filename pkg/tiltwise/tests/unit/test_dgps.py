# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W1203,W0718

"""
This module contains test cases for the synthetic data generating processes.
"""

import numpy as np
import pytest
from scipy import stats

from simlab.dgps import DGPS, generate_dataset, get_dgp


def test_registry_names():
    assert set(DGPS) == {"uniform", "uniform-null", "uniform-constant", "logistic", "holey"}
    with pytest.raises(ValueError):
        get_dgp("gamma")


@pytest.mark.parametrize("name", sorted(DGPS))
def test_density_rows_integrate_to_one(name):
    dgp = get_dgp(name)
    grid = dgp.grid(200)
    covariates = dgp.sample_covariates(7, np.random.default_rng(0))
    density = dgp.density_matrix(covariates, grid)
    np.testing.assert_allclose(grid.integrate(density), 1.0, atol=1e-12)
    assert np.all(density >= 0)


@pytest.mark.parametrize("name", sorted(DGPS))
def test_declared_density_bounds_hold(name):
    dgp = get_dgp(name)
    grid = dgp.grid(200)
    covariates = dgp.sample_covariates(500, np.random.default_rng(1))
    density = dgp.density_matrix(covariates, grid)[:, grid.in_support(grid.points)]
    assert density.min() >= dgp.pi_min * (1 - 1e-9)
    assert density.max() <= dgp.pi_max * (1 + 1e-9)


def test_uniform_treatment_draws_are_uniform():
    data = generate_dataset(get_dgp("uniform"), 4000, seed=2)
    assert stats.kstest(data.treatment, "uniform").pvalue > 1e-3
    assert data.rescale_record == (0.0, 1.0)
    np.testing.assert_array_equal(data.treatment, data.treatment_raw)


def test_holey_draws_avoid_the_gap():
    data = generate_dataset(get_dgp("holey"), 4000, seed=3)
    assert not np.any((data.treatment_raw > 0.4) & (data.treatment_raw < 0.6))
    assert abs(np.mean(data.treatment_raw < 0.5) - 0.5) < 0.05


def test_logistic_treatment_follows_covariate():
    data = generate_dataset(get_dgp("logistic"), 4000, seed=4)
    assert data.d == 2
    low = data.treatment[data.covariates[:, 0] < 0.2].mean()
    high = data.treatment[data.covariates[:, 0] > 0.8].mean()
    assert high - low > 0.1


def test_outcome_noise_and_reproducibility():
    dgp = get_dgp("uniform")
    data = generate_dataset(dgp, 4000, seed=5)
    residual = data.outcome - dgp.mu(data.covariates, data.treatment_raw)
    assert residual.std() == pytest.approx(dgp.noise_sd, rel=0.05)
    again = generate_dataset(dgp, 4000, seed=5)
    np.testing.assert_array_equal(data.outcome, again.outcome)
    other = generate_dataset(dgp, 4000, seed=6)
    assert not np.array_equal(data.outcome, other.outcome)


def test_generate_dataset_rejects_empty_sample():
    with pytest.raises(ValueError):
        generate_dataset(get_dgp("uniform"), 0, seed=0)
