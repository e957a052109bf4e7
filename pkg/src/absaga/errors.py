"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so every failure a user can
trigger should surface as one of them.
"""


class ABSagaError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(ABSagaError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    exit_code = 2

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalFailure(ABSagaError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalFailure):
    """Non-finite iterate. Carries the iteration index and the finite part of the trace."""

    def __init__(self, iteration, trace=None):
        super().__init__(f"non-finite state at iteration {iteration}")
        self.iteration = iteration
        self.trace = list(trace or [])


class GenerationFailure(ABSagaError):
    exit_code = 3


class PreconditionError(ABSagaError, ValueError):
    exit_code = 2


class DataFormatError(ABSagaError, ValueError):
    exit_code = 4

    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class CertificateNotApplicable(ABSagaError):
    """The delta construction's preconditions fail; this is not a failed certificate."""

    exit_code = 3


class StageError(ABSagaError):
    """An error raised inside one pipeline stage; keeps the cause's exit code."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = _exit_code(cause)


def _exit_code(exc):
    if isinstance(exc, ABSagaError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 4
    if isinstance(exc, ArithmeticError):
        return 3
    if isinstance(exc, ValueError):
        return 2
    return 1
