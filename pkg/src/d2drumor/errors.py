"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so every failure that can reach a user
should derive from :class:`D2DRumorError`.
"""


class D2DRumorError(Exception):
    """Base class for all package errors."""


class ConfigError(D2DRumorError, ValueError):
    """Invalid configuration, scenario file or argument."""


class SolverError(D2DRumorError):
    """An optimization routine could not produce a result."""


class NumericalInstabilityError(SolverError):
    """Simplex pivoting stalled even after the anti-cycling fallback."""


class NodeLimitError(SolverError):
    """Branch-and-bound hit its node limit; the best incumbent is attached."""

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


class IterationCapError(SolverError):
    """Targeted-IM doubled its RR collection too many times."""


class OracleCapError(D2DRumorError):
    """An exhaustive oracle was asked to enumerate more cases than allowed."""


class DegenerateScenarioError(D2DRumorError):
    """The scenario cannot drive the pipeline (e.g. zero total criticality)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
