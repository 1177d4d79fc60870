"""Exception types raised by survband."""
from __future__ import annotations
from typing import Optional


class SurvBandError(Exception):
    """Base class for all survband errors."""


class SchemaError(SurvBandError):
    """A column named by the schema is missing or duplicated."""


class ParseError(SurvBandError):
    """A cell could not be parsed as a number.

    Attributes:
        row: 0-based data row index (header excluded), None if unknown.
        column: Column name of the offending cell.
    """

    def __init__(self, message: str, row: Optional[int], column: Optional[str] = None):
        where = [f"row {row}"] if row is not None else []
        if column:
            where.append(f"column '{column}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class ValidationError(SurvBandError):
    """Parsed data violates a domain rule (negative time, bad event code, no events)."""


class ContractError(SurvBandError, ValueError):
    """A library operation was called outside its precondition."""


class DegenerateFeatureError(ContractError):
    """A feature selected for standardization has zero variance."""


class ConfigurationError(SurvBandError):
    """Invalid network or experiment configuration."""


class ExperimentFailedError(SurvBandError):
    """Too many repetitions of an experiment failed.

    Attributes:
        report: The partial CoverageReport built from the successful repetitions.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class TrainingError(SurvBandError):
    """A training run produced a non-finite loss."""
