# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""
Exceptions raised across tiltwise. Every error derives from TiltwiseError so the
command line front end can report any of them as a single machine-readable line.
"""


class TiltwiseError(ValueError):
    """Base class for all tiltwise errors."""


class IdenticallyZeroDensity(TiltwiseError):
    """A density slice carries no mass at any design point."""


class OutOfSupportQuery(TiltwiseError):
    """A treatment value lies outside the hull of the support grid."""


class DegenerateFold(TiltwiseError):
    """A training fold is too small or has a constant outcome."""


class NonpositiveBandwidth(TiltwiseError):
    """A kernel bandwidth is zero or negative."""


class EmptyCandidateSet(TiltwiseError):
    """Bandwidth cross-validation was given no candidates."""


class OverflowRisk(TiltwiseError):
    """exp(delta * A) would overflow double precision in a regression target."""


class TooFewRows(TiltwiseError):
    """The dataset is too small for the requested fold plan or estimator."""


class EmptyFold(TiltwiseError):
    """A fold has no held-out units."""


class UnsortedDeltaGrid(TiltwiseError):
    """The delta grid is not sorted ascending."""


class TooFewValues(TiltwiseError):
    """Fewer than two influence values were supplied."""


class EmptyHalfSample(TiltwiseError):
    """One side of an interior dose-response split is too small."""


class InteriorPointRequired(TiltwiseError):
    """The dose-response target lies on or outside the support boundary."""


class PositiveDeltaRequired(TiltwiseError):
    """The operation is only defined for delta > 0."""


class MissingBoundDeclaration(TiltwiseError):
    """A data generating process does not declare a bound the envelope needs."""


class MissingColumn(TiltwiseError):
    """A declared column is absent from the CSV header."""


class NonNumericCell(TiltwiseError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"Non-numeric value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyAfterFiltering(TiltwiseError):
    """Every CSV row was rejected."""


class CrossFitLeak(TiltwiseError):
    """A nuisance model was asked to predict on rows from its own training folds."""


class ConfigError(TiltwiseError):
    """A configuration document or flag combination is invalid."""
