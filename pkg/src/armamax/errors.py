"""Exception hierarchy shared by all armamax modules.

Every error raised deliberately by the library derives from
:class:`ArmaMaxError`.  The command-line front end maps the two main
families onto process exit codes: configuration problems exit with 1,
numerical problems with 2, and failed oracle comparisons with 3.
"""

from __future__ import annotations


class ArmaMaxError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ConfigError(ArmaMaxError, ValueError):
    """Invalid parameters, missing inputs or inconsistent configuration."""

    exit_code = 1


class UsageError(ConfigError):
    """Inputs that are individually valid but cannot be used together."""


class NumericalError(ArmaMaxError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""

    exit_code = 2


class EvaluationError(NumericalError):
    """A function returned a non-finite value at a quadrature node.

    Parameters
    ----------
    message : str
        Human readable description.
    node : object, optional
        The offending node (scalar or coordinate tuple).
    """

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class AssemblyError(NumericalError):
    """A kernel matrix entry was not finite."""

    def __init__(self, message: str, index: tuple[int, int] | None = None):
        super().__init__(message)
        self.index = index


class SolverError(NumericalError):
    """The eigensolver failed to converge."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class InconsistencyError(NumericalError):
    """Two quantities that must agree by construction do not."""


class AccuracyError(NumericalError):
    """A requested accuracy could not be reached."""


class ComparisonFailure(ArmaMaxError):
    """At least one point failed an oracle comparison."""

    exit_code = 3
