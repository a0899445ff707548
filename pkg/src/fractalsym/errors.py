"""
Exception hierarchy for FractalSym.

Every error the analysis can raise derives from FsaError so the command line
can map the whole family to exit code 2.
"""


class FsaError(Exception):
    """Base class for all FractalSym errors"""


class ConfigError(FsaError):
    """Malformed configuration value"""


class ParseError(FsaError):
    """Syntax error in a program, formula or transformation spec"""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class WellFormednessError(FsaError):
    """Program violates a declaration or structural invariant"""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


class EliminationTooLarge(FsaError):
    """Integer elimination exceeded the configured atom budget"""


class NotSimpleError(FsaError):
    """Statement is outside the class handled by direct symbolic comparison"""


class NonInvertibleIndexMap(FsaError):
    """Write index map cannot be inverted over the enclosing loop variables"""


class TransformError(FsaError):
    """Transformation spec does not apply to the program"""


class EvaluationError(FsaError):
    """Concrete execution failed (division by zero, out-of-bounds index)"""

    def __init__(self, message: str, label: str | None = None):
        self.label = label
        if label:
            message = f"{message} in {label}"
        super().__init__(message)


class SamplingError(FsaError):
    """Instance generation could not satisfy the constraint within budget"""
