"""Exception types shared across the package."""


class PeakgainError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(PeakgainError):
    """A matrix block does not have the shape implied by the declared dims."""

    def __init__(self, block: str, expected, got):
        self.block = block
        self.expected = tuple(expected)
        self.got = tuple(got)
        super().__init__(
            f"block '{block}' has shape {self.got}, expected {self.expected}"
        )


class InvalidPole(PeakgainError):
    """Basis-filter pole outside the open unit interval (-1, 1)."""


class InvalidOrder(PeakgainError):
    """Basis-filter order must be a positive integer."""


class UnstableFilter(PeakgainError):
    """Filter state matrix has spectral radius >= 1 (up to tolerance)."""


class WrongKind(PeakgainError):
    """Uncertainty spec kind does not match the requested multiplier class."""


class PointwiseRequired(PeakgainError):
    """Operation only valid for multiplier classes whose IQC holds pointwise."""


class IllPosed(PeakgainError):
    """Algebraic loop (I - Delta*Dqp) is singular or nearly so at some step."""

    def __init__(self, step: int, cond: float):
        self.step = step
        self.cond = cond
        super().__init__(
            f"interconnection ill-posed at step {step}: "
            f"cond(I - Delta*Dqp) = {cond:.3e}"
        )


class DuplicateVariable(PeakgainError):
    """Two distinct decision variables were declared under the same name."""


class EmptyProgram(PeakgainError):
    """Program has no decision variables or no constraints."""


class SolverFailure(PeakgainError):
    """Backend hit a numerical limit; carries diagnostics."""

    def __init__(self, message: str, stats=None, context=None):
        self.stats = stats
        self.context = context or {}
        if self.context:
            message = f"{message} (context: {self.context})"
        super().__init__(message)


class AllInfeasible(PeakgainError):
    """Every point evaluated by a line search was infeasible."""


class ParseError(PeakgainError):
    """A problem/certificate/report document failed to parse.

    Carries the document location of the first failure when one is known
    (line/column for malformed JSON, key path for schema violations).
    """

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None, path: tuple = ()):
        self.line = line
        self.column = column
        self.path = tuple(path)
        super().__init__(message)


class VolumeUnbounded(PeakgainError):
    """Reachable-set volume objective is unbounded (no disturbance path)."""
