class SearchError(Exception):
    """Base class for every error raised by this package."""


class BoundsError(SearchError, IndexError):
    pass


class AdjacencyError(SearchError, ValueError):
    pass


class BudgetError(SearchError):
    pass


class FormatError(SearchError, ValueError):
    pass


class ParameterError(SearchError, ValueError):
    pass


class DegenerateInputError(SearchError, ValueError):
    pass


class CriterionUndefinedError(SearchError, ValueError):
    pass


class EmptyRegionError(SearchError, ValueError):
    pass


class UndefinedQualityError(SearchError, ValueError):
    pass


class NumericalFailureError(SearchError, ArithmeticError):
    pass


class CoverageComplete(SearchError):
    """Raised by a planner when it has no cell left to visit."""
