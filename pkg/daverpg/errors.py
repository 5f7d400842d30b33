"""
Exception hierarchy for the daverpg engine.
Every failure raised by the engine derives from DaveError.
"""


class DaveError(Exception):
    """Base class for all engine errors"""


class DimensionMismatchError(DaveError, ValueError):
    """Vector or data dimensions disagree"""


class InvalidParameterError(DaveError, ValueError):
    """A parameter lies outside its admissible range"""


class ConvergenceError(DaveError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance"""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class LibSVMParseError(DaveError, ValueError):
    """Malformed LIBSVM input; carries the 1-based line number"""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class MissingSnapshotsError(DaveError, LookupError):
    """A trace lacks the stored iterates an analysis needs"""


class RunError(DaveError, RuntimeError):
    """A concurrent run failed; the partial trace is attached"""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
