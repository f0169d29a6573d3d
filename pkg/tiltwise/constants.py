# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0


"""
File for storing constants that are used throughout the code
"""

import os

import numpy as np

from models import EstimatorConfig, LearnerSpec

SERVICE_NAME = "tiltwise"
LOG_LEVEL = os.getenv("TILTWISE_LOG_LEVEL", "INFO")
THREADS = max(1, int(os.getenv("TILTWISE_THREADS", "1")))

# Tilt grid used by analyze when neither --deltas nor a config file says otherwise
DELTA_MIN = 0.0
DELTA_MAX = 10.0
DELTA_STEPS = 100

FOLDS = 5
BANDWIDTH_MIN = 0.05
BANDWIDTH_MAX = 1.0
BANDWIDTH_COUNT = 50
BANDWIDTHS = [float(h) for h in np.geomspace(BANDWIDTH_MIN, BANDWIDTH_MAX, BANDWIDTH_COUNT)]
CV_DESIGN_POINTS = 10

# Treatment design points per unit of (rescaled) treatment, and the floor per support interval
POINTS_PER_UNIT = 200
MIN_POINTS_PER_INTERVAL = 50
# support gaps wider than this fraction of the observed treatment range split the design grid
SUPPORT_GAP = 0.1

ALPHA = 0.05
SEED = 0

# nu_hat floor is NU_FLOOR_SCALE * exp(max(delta, 0))
NU_FLOOR_SCALE = 1e-6
LARGE_RATIO_THRESHOLD = 1e6
OVERFLOW_EXPONENT = 300.0

MIN_FOLD_ROWS = 20
MIN_ESTIMATION_ROWS = 100
MIN_HALF_SAMPLE_ROWS = 50

DOSE_SCHEDULE_C = 1.0

# Monte Carlo draws over covariates for the simulation oracles
ORACLE_MC_X = 100_000
ORACLE_MC_X_MIN = 10_000

MISSING_MARKERS = ["", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"]

config = EstimatorConfig(
    folds=FOLDS,
    bandwidths=BANDWIDTHS,
    bandwidth=None,
    points_per_unit=POINTS_PER_UNIT,
    min_points=MIN_POINTS_PER_INTERVAL,
    outcome_learner=LearnerSpec(name="nadaraya_watson", options={"degree": 1}),
    density_learner=LearnerSpec(name="nadaraya_watson"),
    seed=SEED,
    alpha=ALPHA,
    boundary_correction=True,
    cv_design_points=CV_DESIGN_POINTS,
    parameterization="quadrature",
    n_jobs=THREADS,
    support_gap=SUPPORT_GAP,
)

ESTIMATION_DEFAULTS = {
    "folds": FOLDS,
    "bandwidths": BANDWIDTHS,
    "bandwidth": None,
    "design_points": POINTS_PER_UNIT,
    "outcome_learner": "nadaraya_watson",
    "density_learner": "nadaraya_watson",
    "seed": SEED,
    "alpha": ALPHA,
    "boundary_correction": True,
    "support_gap": SUPPORT_GAP,
    "threads": THREADS,
}

DATA_DEFAULTS = {
    "covariates": "rest",
    "rescale": True,
    "log_outcome": False,
    "log_treatment": False,
    "out_dir": "out",
}

RUN_DEFAULTS = {
    **ESTIMATION_DEFAULTS,
    **DATA_DEFAULTS,
    "delta_min": DELTA_MIN,
    "delta_max": DELTA_MAX,
    "delta_steps": DELTA_STEPS,
    "deltas": None,
    "tilted_densities": False,
}

DOSE_DEFAULTS = {
    **ESTIMATION_DEFAULTS,
    **DATA_DEFAULTS,
    "at": None,
    "c": DOSE_SCHEDULE_C,
}

SIMULATION_DEFAULTS = {
    **ESTIMATION_DEFAULTS,
    "dgp": "uniform",
    "deltas": [1.0, 2.0, 4.0, 8.0, 16.0],
    "ns": [1000, 2000, 4000, 8000, 16000],
    "n": 2000,
    "replications": 300,
    "epsilons": [0.2, 0.1],
    "c": DOSE_SCHEDULE_C,
    "mc_x": ORACLE_MC_X,
    "oracle_nuisances": True,
    "check": False,
    "out_dir": "out",
}

# Acceptance thresholds printed by simulate
# the delta-axis target is the slope of sqrt(efficiency bound) over the same deltas, 0.5 only in the large-delta limit
RATE_DELTA_SLOPE = (0.5, 0.15)
RATE_N_SLOPE = (-0.5, 0.1)
EDGE_N_SLOPE = (-1.0 / 3.0, 0.15)
COVERAGE_ESTIMATED = (0.92, 0.98)
COVERAGE_ORACLE = (0.93, 0.97)
REMAINDER_RATIO = (3.5, 4.5)
