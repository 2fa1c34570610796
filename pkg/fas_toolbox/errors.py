"""Exception hierarchy shared by every fas-toolbox module.

Each class carries the process exit code the CLI reports for it:
0 success, 1 usage, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

from typing import Any


class FasToolboxError(Exception):
    exit_code: int = 1
    kind: str = "error"

    def __init__(self, message: str, detail: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def __str__(self) -> str:
        return self.message

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.message!r}, detail={self.detail})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "success": False,
            "kind": self.kind,
            "error": self.message,
            **({"detail": self.detail} if self.detail else {}),
        }


class UsageError(FasToolboxError, ValueError):
    exit_code = 1
    kind = "usage"


class DataError(FasToolboxError):
    exit_code = 2
    kind = "data"


class NumericalError(FasToolboxError, ArithmeticError):
    exit_code = 3
    kind = "numerical"


class ManifestError(DataError):
    """A manifest cannot be read or does not satisfy its invariants."""


class ManifestParseError(ManifestError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}", {"line_number": line_number})
        self.line_number = line_number


class LabelValidationError(ManifestParseError):
    pass


class PreconditionError(DataError):
    pass


class GeometryError(DataError):
    pass


class CropError(DataError):
    pass


class MergeError(DataError):
    pass


class ShapeError(DataError, ValueError):
    pass


class ConversionMisuseError(DataError):
    pass


class MetricError(DataError):
    pass


class ProtocolError(DataError):
    pass


class CheckpointError(DataError):
    pass


class OutputError(DataError):
    """An artifact could not be written."""
