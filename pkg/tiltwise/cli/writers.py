# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Result files. Every write goes to a temporary file in the target directory and
is renamed into place, so readers never see a partial file.
"""

import json
import os
import platform
import tempfile
from pathlib import Path
from typing import Any, Sequence, Union

import joblib
import numpy as np
import pandas as pd
import pydantic
import scipy
import sklearn
from aws_lambda_powertools import Logger
from pydantic import BaseModel

from models import IncrementalEstimate
from tilting.dataset import Dataset
from tilting.tilt_core import SupportGrid

logger = Logger(service="tiltwise", child=True)

CURVE_COLUMNS = ["delta", "psi_hat", "se", "ci_lower", "ci_upper"]
FLOAT_FORMAT = "%.17g"


def atomic_write(path: Union[str, Path], text: str) -> Path:
    """
    Function to write text to path through a temporary file and os.replace.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    logger.debug("Wrote file", extra={"path": str(path), "bytes": len(text)})
    return path


def _frame_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_curve(path: Union[str, Path], estimates: Sequence[IncrementalEstimate]) -> Path:
    frame = pd.DataFrame([[getattr(e, c) for c in CURVE_COLUMNS] for e in estimates], columns=CURVE_COLUMNS)
    return atomic_write(path, _frame_csv(frame))


def write_records(path: Union[str, Path], records: Sequence[BaseModel]) -> Path:
    """
    Function to write a list of flat pydantic records as a CSV report.
    """
    frame = pd.DataFrame([record.model_dump(mode="json") for record in records])
    return atomic_write(path, _frame_csv(frame))


def write_json(path: Union[str, Path], payload: Any) -> Path:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def library_versions() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "joblib": joblib.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_run_metadata(path: Union[str, Path], config: BaseModel, seed: int, **sections: Any) -> Path:
    """
    Function to write run.json: the config echo, the seed, library versions and
    any further sections (diagnostics, ingest report).
    """
    payload = {
        "config": config.model_dump(mode="json"),
        "seed": seed,
        "versions": library_versions(),
    }
    for name, value in sections.items():
        if isinstance(value, BaseModel):
            value = value.model_dump(mode="json")
        elif isinstance(value, list):
            value = [item.model_dump(mode="json") if isinstance(item, BaseModel) else item for item in value]
        payload[name] = value
    return write_json(path, payload)


def write_tilted_density(path: Union[str, Path], grid: SupportGrid, deltas: Sequence[float],
                         density: np.ndarray, data: Dataset) -> Path:
    """
    Long-format tilted marginal density: one row per (delta, design point), with
    the design point in the rescaled and in the original treatment units.
    """
    deltas = np.asarray(deltas, dtype=float)
    frame = pd.DataFrame({
        "delta": np.repeat(deltas, grid.size),
        "a": np.tile(grid.points, deltas.size),
        "a_raw": np.tile(np.asarray(data.to_raw_scale(grid.points), dtype=float), deltas.size),
        "density": np.asarray(density, dtype=float).ravel(),
    })
    return atomic_write(path, _frame_csv(frame))


def export_dataset(path: Union[str, Path], data: Dataset, outcome: str = "y", treatment: str = "a") -> Path:
    """
    Function to write a Dataset as CSV at 17 significant digits: the outcome, the
    raw treatment and covariates named x1..xd.
    """
    frame = pd.DataFrame({outcome: data.outcome, treatment: data.treatment_raw})
    for j in range(data.d):
        frame[f"x{j + 1}"] = data.covariates[:, j]
    return atomic_write(path, _frame_csv(frame))
