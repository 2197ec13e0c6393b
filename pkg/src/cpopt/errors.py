"""Exception hierarchy; the CLI maps each family to an exit code."""


class CpoptError(Exception):
    """Base class for package errors."""


class DataError(CpoptError, ValueError):
    """Input data is missing, malformed or violates a type invariant."""


class NumericalError(CpoptError, ArithmeticError):
    """A computation is undefined for the given inputs (e.g. degenerate risk)."""


class InfeasibleError(NumericalError):
    """Constraints admit no solution at the requested resolution."""
