# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
CSV ingestion: parse the declared columns, drop rows with missing values and
build the Dataset the estimator consumes.
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from aws_lambda_powertools import Logger

from constants import MISSING_MARKERS
from errors import ConfigError, EmptyAfterFiltering, MissingColumn, NonNumericCell
from models import DataConfig, IngestReport
from tilting.dataset import Dataset

logger = Logger(service="tiltwise", child=True)


def resolve_columns(header: list[str], config: DataConfig) -> list[str]:
    """
    Function to list the covariate columns, checking that every declared column exists.
    """
    for column in (config.outcome, config.treatment):
        if column not in header:
            raise MissingColumn(f"column {column!r} not found in header {header}")
    if config.covariates == "rest":
        return [c for c in header if c not in (config.outcome, config.treatment)]
    missing = [c for c in config.covariates if c not in header]
    if missing:
        raise MissingColumn(f"covariate columns {missing} not found in header {header}")
    return list(config.covariates)


def _to_float(text: str) -> float:
    # correctly rounded: text written at 17 significant digits reads back to the same double
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_numeric(frame: pd.DataFrame) -> tuple[pd.DataFrame, np.ndarray]:
    """Numeric values and a per-row flag for rows holding a missing marker."""
    stripped = frame.apply(lambda column: column.str.strip())
    missing = stripped.isin(MISSING_MARKERS).to_numpy()
    values = stripped.apply(lambda column: column.map(_to_float).astype(float))
    bad = ~missing & ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        # data rows are numbered from 1, the header is not counted
        raise NonNumericCell(row=int(row) + 1, column=str(frame.columns[col]), value=str(frame.iat[row, col]))
    return values, missing.any(axis=1)


def _log1p(values: np.ndarray, column: str) -> np.ndarray:
    if np.any(values <= -1.0):
        raise ConfigError(f"log transform of column {column!r} needs values > -1")
    return np.log1p(values)


def ingest_csv(path: Union[str, Path], config: DataConfig) -> tuple[Dataset, IngestReport]:
    """
    Function to read a CSV with a header row into a Dataset. Rows holding a
    missing-value marker are dropped and listed in the report; any other
    non-numeric cell is an error.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    covariates = resolve_columns(list(frame.columns), config)
    columns = [config.outcome, config.treatment] + covariates
    values, dropped = _parse_numeric(frame[columns])

    report = IngestReport(
        rows_read=len(frame),
        rows_kept=int((~dropped).sum()),
        dropped_rows=[int(i) + 1 for i in np.flatnonzero(dropped)],
    )
    if report.dropped_rows:
        logger.warning("Dropped rows with missing values", extra={
            "path": str(path), "dropped": len(report.dropped_rows), "kept": report.rows_kept,
        })
    if report.rows_kept == 0:
        raise EmptyAfterFiltering(f"no rows of {path} survive missing-value filtering")

    kept = values[~dropped]
    outcome = kept[config.outcome].to_numpy(dtype=float)
    treatment = kept[config.treatment].to_numpy(dtype=float)
    if config.log_outcome:
        outcome = _log1p(outcome, config.outcome)
    if config.log_treatment:
        treatment = _log1p(treatment, config.treatment)
    covariate_values = kept[covariates].to_numpy(dtype=float).reshape(len(kept), len(covariates))

    data = Dataset.from_arrays(covariate_values, treatment, outcome, rescale=config.rescale)
    logger.info("Ingested CSV", extra={"path": str(path), "rows": data.n, "covariates": data.d})
    return data, report
