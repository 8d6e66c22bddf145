"""Exception hierarchy shared by every module."""


class VrscpError(Exception):
    """Base class for all package errors."""


class ConfigError(VrscpError, ValueError):
    """Invalid configuration, shape mismatch or violated precondition."""


class NumericError(VrscpError, ArithmeticError):
    """A non-finite value appeared during a computation."""


class EnumerationBudgetError(VrscpError):
    """Exact enumeration would exceed the trajectory budget."""

    def __init__(self, count, budget):
        self.count = count
        self.budget = budget
        super().__init__(
            f"enumeration refused: {count} trajectories exceeds budget {budget}"
        )


class OracleError(VrscpError):
    """A test oracle failed its own certificate (infrastructure bug)."""
