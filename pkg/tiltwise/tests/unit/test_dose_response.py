# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

# pylint: disable=C0301,R0801,W1203,W0718

"""
This module contains test cases for dose-response estimation from steep tilts.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

import constants
from errors import EmptyHalfSample, InteriorPointRequired, PositiveDeltaRequired, TooFewRows
from models import DoseResponseEstimate
from simlab.dgps import generate_dataset, get_dgp
from simlab.oracles import oracle_efficiency_bound, oracle_nuisances, oracle_psi
from tilting.dose_response import (
    edge_bias_bound, estimate_at_point, estimate_edge, schedule_delta, sigma_delta_ratio, split_at_point,
)
from tilting.tilt_core import TiltSpec

UNIFORM = get_dgp("uniform")


@pytest.fixture(scope="module")
def uniform_data():
    return generate_dataset(UNIFORM, 2000, seed=8)


def _edge_result(side, estimate, se, n):
    return DoseResponseEstimate(target=f"edge-{side}", a_prime=0.5, delta_used=10.0,
                                direction=1 if side == "upper" else -1, c=1.0, estimate=estimate, se=se, n=n)


def test_schedule_grows_with_cube_root():
    assert schedule_delta(1000) == pytest.approx(10.0)
    assert schedule_delta(8000, c=0.5) == pytest.approx(10.0)


def test_edge_bias_bound_forms():
    bound = edge_bias_bound(1.0, 2.0, 1.0, 4.0)
    assert bound.bound == pytest.approx(0.5)
    assert bound.refined == pytest.approx(2.0 * (0.25 - 1.0 / math.expm1(4.0)))
    assert bound.refined < bound.bound
    with pytest.raises(PositiveDeltaRequired):
        edge_bias_bound(1.0, 1.0, 1.0, 0.0)


@pytest.mark.parametrize("delta", [5.0, 10.0, 20.0])
def test_refined_bound_is_exact_for_linear_uniform(delta):
    truth = oracle_psi(UNIFORM, TiltSpec(delta), mc_x=10_000).value
    bound = edge_bias_bound(1.0, 1.0, 1.0, delta)
    assert abs(1.0 - truth) == pytest.approx(bound.refined, abs=1e-3)
    assert abs(1.0 - truth) <= bound.bound


def test_upper_edge_with_oracle_nuisances(uniform_data):
    result = estimate_edge(uniform_data, "upper", 1.0, constants.config, oracle_nuisances(UNIFORM))
    assert result.target == "edge-upper"
    assert result.direction == 1
    assert result.a_prime == pytest.approx(1.0)
    assert result.delta_used == pytest.approx(2000 ** (1.0 / 3.0))
    expected = oracle_psi(UNIFORM, TiltSpec(result.delta_used), mc_x=10_000).value
    assert abs(result.estimate - expected) < 4 * result.se
    assert result.components["ci_lower"] < result.estimate < result.components["ci_upper"]


def test_lower_edge_with_oracle_nuisances(uniform_data):
    result = estimate_edge(uniform_data, "lower", 1.0, constants.config, oracle_nuisances(UNIFORM))
    assert result.direction == -1
    assert result.a_prime == pytest.approx(0.0)
    assert result.estimate < 0.2


def test_edge_needs_enough_rows():
    with pytest.raises(TooFewRows):
        estimate_edge(generate_dataset(UNIFORM, 50, seed=0), "upper")


def test_split_at_point_rescales_halves(uniform_data):
    lower, upper = split_at_point(uniform_data, 0.4)
    assert lower.n + upper.n == uniform_data.n
    assert lower.treatment.max() <= 1.0 and upper.treatment.min() >= 0.0
    assert lower.rescale_record[1] == pytest.approx(0.4)
    assert upper.rescale_record[0] == pytest.approx(0.4)
    assert np.all(lower.treatment_raw <= 0.4) and np.all(upper.treatment_raw > 0.4)


def test_split_at_point_guards(uniform_data):
    with pytest.raises(InteriorPointRequired):
        split_at_point(uniform_data, 0.0)
    with pytest.raises(InteriorPointRequired):
        split_at_point(uniform_data, 1.5)
    with pytest.raises(EmptyHalfSample):
        split_at_point(uniform_data, 0.005)


def test_interior_estimate_averages_halves(uniform_data):
    results = [_edge_result("upper", 0.4, 0.03, 800), _edge_result("lower", 0.6, 0.04, 1200)]
    with patch("tilting.dose_response.estimate_edge", side_effect=results) as mock_edge:
        result = estimate_at_point(uniform_data, 0.4, 1.0, constants.config.model_copy(update={"n_jobs": 1}))
    assert mock_edge.call_count == 2
    assert result.target == "point"
    assert result.estimate == pytest.approx(0.5)
    assert result.se == pytest.approx(0.5 * 0.05)
    assert result.a_prime == pytest.approx(0.4)
    assert result.components["lower_n"] == 800 and result.components["upper_n"] == 1200


def test_sigma_delta_ratio_from_dgp_and_data(uniform_data):
    tilt = TiltSpec(4.0)
    from_dgp = sigma_delta_ratio(UNIFORM, tilt, mc_x=10_000)
    assert from_dgp == pytest.approx(oracle_efficiency_bound(UNIFORM, tilt, mc_x=10_000).value / 4.0)
    from_data = sigma_delta_ratio(uniform_data, tilt, constants.config, nuisances=oracle_nuisances(UNIFORM))
    assert from_data == pytest.approx(from_dgp, rel=0.3)
    with pytest.raises(PositiveDeltaRequired):
        sigma_delta_ratio(UNIFORM, TiltSpec(-1.0))


@pytest.fixture(scope="module")
def large_uniform_data():
    return generate_dataset(UNIFORM, 8000, seed=21)


@pytest.fixture(scope="module")
def fixed_bandwidth_config():
    return constants.config.model_copy(update={"bandwidth": 0.2, "points_per_unit": 50})


def test_upper_edge_with_estimated_nuisances(large_uniform_data, fixed_bandwidth_config):
    result = estimate_edge(large_uniform_data, "upper", 1.0, fixed_bandwidth_config)
    # E[Y^1] is 1 under the uniform design; the steep tilt leaves an edge bias near 1/delta
    assert result.delta_used == pytest.approx(20.0)
    assert abs(result.estimate - 1.0) < 0.08


def test_interior_point_with_estimated_nuisances(large_uniform_data, fixed_bandwidth_config):
    result = estimate_at_point(large_uniform_data, 0.5, 1.0, fixed_bandwidth_config)
    assert result.components["lower_n"] + result.components["upper_n"] == 8000
    assert abs(result.estimate - 0.5) < 0.1
