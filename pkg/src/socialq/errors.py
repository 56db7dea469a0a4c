"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the runner can turn any
failure into a machine-readable error record without a lookup table.
"""

from __future__ import annotations


class SocialQError(Exception):
    """Base class for all package errors."""

    code = "error"
    exit_code = 1


class ValidationError(SocialQError, ValueError):
    """Invalid input; ``field`` names the offending attribute or config path."""

    code = "validation"
    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")

    def __reduce__(self):
        return type(self), (self.field, self.message)


class UnsupportedSpecError(ValidationError):
    code = "unsupported-spec"


class NumericError(SocialQError, ArithmeticError):
    code = "numeric"
    exit_code = 4


class StabilityError(SocialQError):
    """Mean arrival rate is not strictly below mean departure rate."""

    code = "unstable"
    exit_code = 3


class NoFiniteRootError(NumericError):
    code = "no-finite-root"


class FitError(NumericError):
    code = "fit"


class InfeasibleError(SocialQError):
    code = "infeasible"
    exit_code = 3


class ConfigParseError(ValidationError):
    code = "parse"


class UnknownFieldError(ValidationError):
    code = "unknown-field"
