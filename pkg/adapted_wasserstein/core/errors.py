"""Exceptions raised by the library.

The CLI maps these onto exit codes: `SolverError` -> 1,
`InvalidInputError` -> 2. Stability checks never raise; they return reports.
"""


class InvalidInputError(ValueError):
    """Input violates a documented precondition."""


class TreeParseError(InvalidInputError):
    """Tree file could not be parsed into a valid scenario tree."""


class SolverError(RuntimeError):
    """A numerical solver did not reach a certified answer."""


class ProblemSizeError(SolverError):
    """Instance exceeds the configured size limit."""
