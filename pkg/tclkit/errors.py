# tclkit/errors.py
from __future__ import annotations


class TclError(Exception):
    """Root of every error raised by tclkit; `category` is what the CLI prints."""

    category = "error"


class ValidationError(TclError, ValueError):
    category = "validation"


class DimensionError(ValidationError):
    category = "dimension"


class LinkDomainError(TclError, ValueError):
    category = "domain"


class SeparationError(TclError, ArithmeticError):
    category = "separation"


class RankDeficiencyError(TclError, ArithmeticError):
    category = "rank"


class ConfigError(TclError, ValueError):
    category = "config"


class SchemaError(TclError, ValueError):
    category = "schema"

    def __init__(self, message: str, file: str | None = None, line: int | None = None):
        self.file = file
        self.line = line
        where = ""
        if file is not None:
            where = f"{file}:{line}: " if line is not None else f"{file}: "
        super().__init__(f"{where}{message}")


class BootstrapTrialError(TclError, RuntimeError):
    category = "bootstrap"

    def __init__(self, trial: int, cause: BaseException):
        self.trial = trial
        self.cause = cause
        super().__init__(f"trial {trial} failed: {cause}")
