"""Exception hierarchy shared by the library and the command line."""


class NvDephaseError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(NvDephaseError, ValueError):
    """Invalid input: domain violations, malformed files, bad configuration."""

    exit_code = 1


class SamplingError(NvDephaseError, RuntimeError):
    """A sampler could not start or aborted."""

    exit_code = 2

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(SamplingError):
    """Chains finished but failed the convergence gate (R-hat too large)."""


class DataIOError(NvDephaseError, OSError):
    """Reading or writing a file failed."""

    exit_code = 3
