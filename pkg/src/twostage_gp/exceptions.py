"""Exception hierarchy mapped to CLI exit codes.

InputError -> 1, NumericalError/TrainingError -> 2, ProcedureError -> 3.
"""


class TwoStageGPError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(TwoStageGPError):
    """Invalid user input: bad shapes, non-finite values, bad config."""

    exit_code = 1


class NumericalError(TwoStageGPError):
    """Numerical failure: factorization breakdown, non-positive variance."""

    exit_code = 2


class TrainingError(NumericalError):
    """Optimization failure; carries the iteration where it occurred."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ProcedureError(TwoStageGPError):
    """A multi-round procedure failed too often to produce a result."""

    exit_code = 3
