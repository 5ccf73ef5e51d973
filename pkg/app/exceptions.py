"""Error types raised by the numerical services.

All of them derive from ``ValueError`` so callers that only care about
"bad input / infeasible job" can catch one type; the CLI maps them to exit
codes.
"""


class PRadiusError(ValueError):
    """Base class for every domain error."""


class DimensionCapError(PRadiusError):
    """A Kronecker lift or block matrix would exceed the dimension cap."""

    def __init__(self, rows: int, cap: int, what: str = "matrix"):
        self.rows = rows
        self.cap = cap
        super().__init__(
            f"{what} would have {rows} rows, above the dimension cap of {cap} "
            f"(raise PRADIUS_DIM_CAP to allow it)"
        )


class BudgetExceededError(PRadiusError):
    """Exhaustive enumeration would exceed the product budget."""

    def __init__(self, count: float, budget: int, what: str = "products"):
        self.count = count
        self.budget = budget
        super().__init__(
            f"enumerating {count:.0f} {what} exceeds the budget of {budget} "
            f"(use --budget to raise it)"
        )


class ConeConditionError(PRadiusError):
    """The invariant-cone formula was requested for a family with a negative entry."""


class DegenerateEstimateError(PRadiusError):
    """A growth-rate regression has no usable data (zero moments, too few points)."""


class ProblemFileError(PRadiusError):
    """A problem file could not be parsed or failed validation."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class InvariantViolationError(RuntimeError):
    """A computed quantity broke a mathematical guarantee (a numerical bug, not bad input)."""
