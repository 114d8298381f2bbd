"""Budgeted visual search on a grid with online score-map adaptation."""

from searchtta.errors import (
    AdjacencyError,
    BoundsError,
    BudgetError,
    CoverageComplete,
    CriterionUndefinedError,
    DegenerateInputError,
    EmptyRegionError,
    FormatError,
    NumericalFailureError,
    ParameterError,
    SearchError,
    UndefinedQualityError,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyError",
    "BoundsError",
    "BudgetError",
    "CoverageComplete",
    "CriterionUndefinedError",
    "DegenerateInputError",
    "EmptyRegionError",
    "FormatError",
    "NumericalFailureError",
    "ParameterError",
    "SearchError",
    "UndefinedQualityError",
]
