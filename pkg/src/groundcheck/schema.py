"""Unified grounded-verification data model and its line-delimited record format.

Every pipeline stage speaks :class:`Example`. Label semantics are global:
``1`` means the assessed content is consistent with the document, ``0`` means
it is hallucinated.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator


class TaskFormat(str, Enum):
    NLI = "nli"
    QA = "qa"
    DIALOGUE = "dialogue"
    SUMMARIZATION = "summarization"


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


class Language(str, Enum):
    EN = "en"
    ES = "es"


class HallucinationErrorType(str, Enum):
    ENTITY = "entity"
    RELATION = "relation"
    SENTENCE = "sentence"
    INVENTED = "invented"
    SUBJECTIVE = "subjective"
    UNVERIFIABLE = "unverifiable"


_TASK_NAMES = {
    TaskFormat.NLI: "NLI",
    TaskFormat.QA: "QA",
    TaskFormat.DIALOGUE: "Dialogue",
    TaskFormat.SUMMARIZATION: "Summarization",
}

# Keys written by the serializer, in output order. Anything else is kept in
# Example.extra and written back after these.
_KNOWN_KEYS = (
    "id",
    "task",
    "document",
    "conversation",
    "label",
    "lang",
    "source",
    "hallucination_type",
    "rationale",
    "meta",
)


@dataclass(frozen=True)
class Turn:
    role: Role
    content: str

    @classmethod
    def user(cls, content: str) -> "Turn":
        return cls(Role.USER, content)

    @classmethod
    def assistant(cls, content: str) -> "Turn":
        return cls(Role.ASSISTANT, content)


@dataclass(frozen=True)
class Example:
    """One grounded-verification instance.

    ``conversation`` always ends with the assistant turn being assessed.
    ``meta`` is opaque caller data; ``extra`` holds unknown record fields so
    they survive a read/write round trip.
    """

    id: str
    task: TaskFormat
    document: str
    conversation: tuple[Turn, ...]
    label: int | None = None
    language: Language = Language.EN
    source: str = ""
    hallucination_type: HallucinationErrorType | None = None
    rationale: str | None = None
    meta: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def assessed(self) -> str:
        """Content of the final assistant turn."""
        return self.conversation[-1].content

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "id": self.id,
            "task": _enum_value(self.task),
            "document": self.document,
            "conversation": [
                {"role": _enum_value(t.role), "content": t.content} for t in self.conversation
            ],
            "label": self.label,
            "lang": _enum_value(self.language),
            "source": self.source,
        }
        if self.hallucination_type is not None:
            rec["hallucination_type"] = _enum_value(self.hallucination_type)
        if self.rationale is not None:
            rec["rationale"] = self.rationale
        if self.meta is not None:
            rec["meta"] = self.meta
        for key, value in self.extra.items():
            if key not in rec:
                rec[key] = value
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Example":
        """Build an Example from a decoded record; raises KeyError/ValueError/TypeError."""
        if not isinstance(rec, dict):
            raise TypeError(f"record must be an object, got {type(rec).__name__}")
        turns = rec["conversation"]
        if not isinstance(turns, list):
            raise TypeError("conversation must be an array")
        htype = rec.get("hallucination_type")
        return cls(
            id=rec["id"],
            task=TaskFormat(rec["task"]),
            document=rec["document"],
            conversation=tuple(Turn(Role(t["role"]), t["content"]) for t in turns),
            label=rec.get("label"),
            language=Language(rec.get("lang", "en")),
            source=rec.get("source", ""),
            hallucination_type=HallucinationErrorType(htype) if htype is not None else None,
            rationale=rec.get("rationale"),
            meta=rec.get("meta"),
            extra={k: v for k, v in rec.items() if k not in _KNOWN_KEYS},
        )


def _enum_value(value: Any) -> Any:
    return value.value if isinstance(value, Enum) else value


class RecordFormatError(ValueError):
    def __init__(self, path: str | os.PathLike, line: int, cause: Exception):
        self.path = str(path)
        self.line = line
        self.cause = cause
        super().__init__(f"{self.path}: line {line}: {cause}")


class InvalidExampleError(ValueError):
    def __init__(self, example_id: Any, violations: list[str]):
        self.example_id = example_id
        self.violations = list(violations)
        super().__init__(f"invalid example {example_id!r}: " + "; ".join(self.violations))


def _nonblank(value: Any) -> bool:
    return isinstance(value, str) and value.strip() != ""


def validate_example(e: Any) -> list[str]:
    """Return every broken invariant of ``e``; an empty list means valid.

    Never raises, whatever the field contents are.
    """
    try:
        return _violations(e)
    except Exception as exc:  # pragma: no cover - defensive, _violations is guarded
        return [f"example could not be inspected: {exc!r}"]


def _violations(e: Any) -> list[str]:
    out: list[str] = []
    eid = getattr(e, "id", None)
    if not _nonblank(eid):
        out.append("id must be a non-empty string")

    task = getattr(e, "task", None)
    if not isinstance(task, TaskFormat):
        try:
            task = TaskFormat(task)
        except (ValueError, TypeError):
            out.append(f"task must be one of {[t.value for t in TaskFormat]}, got {task!r}")
            task = None

    if not _nonblank(getattr(e, "document", None)):
        out.append("document must be non-empty")

    turns = getattr(e, "conversation", None)
    roles: list[Role | None] = []
    if not isinstance(turns, (list, tuple)) or len(turns) == 0:
        out.append("conversation must be a non-empty list of turns")
        turns = ()
    for i, turn in enumerate(turns):
        role = getattr(turn, "role", None)
        try:
            role = Role(role)
        except (ValueError, TypeError):
            out.append(f"conversation[{i}].role must be 'user' or 'assistant'")
            role = None
        roles.append(role)
        if not _nonblank(getattr(turn, "content", None)):
            out.append(f"conversation[{i}].content must be non-empty")

    if roles and roles[-1] is not Role.ASSISTANT:
        out.append("conversation must end with an assistant turn")

    if task in (TaskFormat.NLI, TaskFormat.SUMMARIZATION):
        if roles != [Role.ASSISTANT]:
            out.append(f"{_TASK_NAMES[task]} requires exactly one assistant turn")
    elif task is TaskFormat.QA:
        if roles != [Role.USER, Role.ASSISTANT]:
            out.append("QA requires exactly [user, assistant] turns")
    elif task is TaskFormat.DIALOGUE:
        if len(roles) < 2:
            out.append("Dialogue requires at least 2 turns")
        expected = [Role.USER if i % 2 == 0 else Role.ASSISTANT for i in range(len(roles))]
        if roles != expected:
            out.append("Dialogue turns must alternate user/assistant starting with user")

    label = getattr(e, "label", None)
    if label is not None and (
        isinstance(label, bool) or not isinstance(label, int) or label not in (0, 1)
    ):
        out.append("label must be 0 or 1")

    lang = getattr(e, "language", None)
    try:
        Language(lang)
    except (ValueError, TypeError):
        out.append(f"language must be 'en' or 'es', got {lang!r}")

    if not isinstance(getattr(e, "source", None), str):
        out.append("source must be a string")

    htype = getattr(e, "hallucination_type", None)
    if htype is not None:
        try:
            HallucinationErrorType(htype)
        except (ValueError, TypeError):
            out.append(f"hallucination_type {htype!r} is not a known error type")

    rationale = getattr(e, "rationale", None)
    if rationale is not None and not isinstance(rationale, str):
        out.append("rationale must be a string")

    meta = getattr(e, "meta", None)
    if meta is not None and not isinstance(meta, dict):
        out.append("meta must be an object")
    return out


def ensure_valid(e: Example) -> Example:
    problems = validate_example(e)
    if problems:
        raise InvalidExampleError(getattr(e, "id", None), problems)
    return e


def iter_records(path: str | os.PathLike) -> Iterator[Example]:
    """Lazily read a record file, validating every example."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ex = Example.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise RecordFormatError(path, lineno, exc) from exc
            yield ensure_valid(ex)


def read_records(path: str | os.PathLike) -> list[Example]:
    return list(iter_records(path))


def dumps_record(e: Example) -> str:
    return json.dumps(e.to_record(), ensure_ascii=False)


def write_records(path: str | os.PathLike, examples: Iterable[Example]) -> int:
    """Write examples atomically; nothing is created if any example is invalid."""
    examples = list(examples)
    for e in examples:
        ensure_valid(e)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            for e in examples:
                fh.write(dumps_record(e))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(examples)
