"""Exception types shared across the package.

Every error carries a stable ``code`` (e.g. ``CYCLE``, ``SCHEMA_ERROR``) so
callers and the CLI can branch on it without parsing messages.
"""

from __future__ import annotations


class RepomineError(Exception):
    code = "ERROR"

    def __init__(self, code: str, message: str, *, where: str | None = None):
        self.code = code
        self.message = message
        self.where = where
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.where:
            return f"{self.code} at {self.where}: {self.message}"
        return f"{self.code}: {self.message}"


class ModelError(RepomineError):
    """Raised by model operations (e.g. ordering a cyclic history)."""


class ExtractionError(RepomineError):
    """NOT_A_REPOSITORY, TOOL_FAILURE, PARSE_ERROR, NO_SUCH_REVISION, ..."""


class SchemaError(RepomineError):
    """A model file or study config does not match its schema."""

    def __init__(self, message: str, *, where: str = "", code: str = "SCHEMA_ERROR"):
        super().__init__(code, message, where=where or "/")


class PlanError(RepomineError):
    """The study configuration cannot be turned into an execution plan."""


class BlackboardError(RepomineError):
    pass


class AnalysisError(RepomineError):
    pass
