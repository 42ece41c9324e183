"""Hallucination-detection data building and judge evaluation."""

__version__ = "0.1.0"

from .schema import (  # noqa: E402
    Example,
    HallucinationErrorType,
    Language,
    Role,
    TaskFormat,
    Turn,
    read_records,
    validate_example,
    write_records,
)

__all__ = [
    "Example",
    "HallucinationErrorType",
    "Language",
    "Role",
    "TaskFormat",
    "Turn",
    "read_records",
    "validate_example",
    "write_records",
]
