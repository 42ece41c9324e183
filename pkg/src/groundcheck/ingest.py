"""Source-dataset adapters and declarative benchmark assembly."""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import yaml

from .schema import Example, Language, Role, TaskFormat, Turn, validate_example

SAMPLING_ALGORITHM = "python-random.Random(seed).sample/sorted-indices/v1"


class IngestError(ValueError):
    pass


class Adapter(str, Enum):
    NLI_TRIPLE = "nli_triple"
    QA_TUPLE = "qa_tuple"
    DIALOGUE_TRIPLE = "dialogue_triple"
    SUMMARY_PAIR = "summary_pair"
    UNIFIED = "unified"


_ADAPTER_TASKS = {
    Adapter.NLI_TRIPLE: {TaskFormat.NLI},
    Adapter.QA_TUPLE: {TaskFormat.QA},
    Adapter.DIALOGUE_TRIPLE: {TaskFormat.DIALOGUE},
    # summaries may be ingested directly as claims
    Adapter.SUMMARY_PAIR: {TaskFormat.SUMMARIZATION, TaskFormat.NLI},
    Adapter.UNIFIED: set(TaskFormat),
}


def _require_text(**fields: Any) -> None:
    for name, value in fields.items():
        if not isinstance(value, str) or not value.strip():
            raise IngestError(f"{name} must be non-empty text")


def _require_label(label: Any) -> int:
    if isinstance(label, bool) or label not in (0, 1):
        raise IngestError(f"label must be 0 or 1, got {label!r}")
    return int(label)


def _content_id(provenance: str, *parts: str) -> str:
    digest = hashlib.sha1("\x1f".join(parts).encode("utf-8")).hexdigest()[:12]
    return f"{provenance}/{digest}"


def from_nli_triple(
    premise: str,
    hypothesis: str,
    label: int,
    provenance: str,
    *,
    example_id: str | None = None,
    language: Language | str = Language.EN,
) -> Example:
    """Premise/hypothesis pair as an NLI example. Neutral pairs must be dropped by the caller."""
    _require_text(premise=premise, hypothesis=hypothesis)
    label = _require_label(label)
    return Example(
        id=example_id or _content_id(provenance, premise, hypothesis),
        task=TaskFormat.NLI,
        document=premise,
        conversation=(Turn.assistant(hypothesis),),
        label=label,
        language=Language(language),
        source=provenance,
    )


def from_qa_tuple(
    passage: str,
    question: str,
    answer: str,
    label: int,
    provenance: str,
    *,
    example_id: str | None = None,
    language: Language | str = Language.EN,
) -> Example:
    _require_text(passage=passage, question=question, answer=answer)
    label = _require_label(label)
    return Example(
        id=example_id or _content_id(provenance, passage, question, answer),
        task=TaskFormat.QA,
        document=passage,
        conversation=(Turn.user(question), Turn.assistant(answer)),
        label=label,
        language=Language(language),
        source=provenance,
    )


def from_summary_pair(
    document: str,
    summary: str,
    label: int,
    provenance: str,
    *,
    example_id: str | None = None,
    language: Language | str = Language.EN,
) -> Example:
    _require_text(document=document, summary=summary)
    label = _require_label(label)
    return Example(
        id=example_id or _content_id(provenance, document, summary),
        task=TaskFormat.SUMMARIZATION,
        document=document,
        conversation=(Turn.assistant(summary),),
        label=label,
        language=Language(language),
        source=provenance,
    )


def from_dialogue_triple(
    document: str,
    history: Sequence[Turn],
    response: str,
    label: int,
    provenance: str,
    *,
    example_id: str | None = None,
    language: Language | str = Language.EN,
) -> Example:
    """Conversation history plus the assistant response being assessed."""
    _require_text(document=document, response=response)
    label = _require_label(label)
    turns = tuple(history) + (Turn.assistant(response),)
    e = Example(
        id=example_id or _content_id(provenance, document, *(t.content for t in turns)),
        task=TaskFormat.DIALOGUE,
        document=document,
        conversation=turns,
        label=label,
        language=Language(language),
        source=provenance,
    )
    problems = validate_example(e)
    if problems:
        raise IngestError("; ".join(problems))
    return e


def summary_to_nli(e: Example) -> Example:
    """Treat a summary as a claim about its document."""
    if e.task is not TaskFormat.SUMMARIZATION:
        raise IngestError(f"{e.id}: summary_to_nli needs a summarization example, got {e.task.value}")
    return replace(e, id=f"{e.id}#as-nli", task=TaskFormat.NLI)


_TAG = re.compile(r"\[(human|user|assistant|bot|system)\]\s*:\s*", re.IGNORECASE)
_TAG_ROLES = {"human": Role.USER, "user": Role.USER, "assistant": Role.ASSISTANT, "bot": Role.ASSISTANT}


def parse_history(value: Any) -> tuple[Turn, ...]:
    """Conversation history from a list of {role, content}, a list of strings
    (alternating, user first) or a string with ``[Human]:``/``[Assistant]:`` tags."""
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        parts = _TAG.split(value)
        if len(parts) < 3:
            raise IngestError("history string has no [Human]/[Assistant] tags")
        turns = []
        for tag, text in zip(parts[1::2], parts[2::2]):
            role = _TAG_ROLES.get(tag.lower())
            if role is None:
                continue
            turns.append(Turn(role, text.strip()))
        return tuple(turns)
    if isinstance(value, list):
        turns = []
        for i, item in enumerate(value):
            if isinstance(item, str):
                turns.append(Turn(Role.USER if i % 2 == 0 else Role.ASSISTANT, item))
            elif isinstance(item, dict):
                role = str(item.get("role", "")).lower()
                if role not in _TAG_ROLES:
                    raise IngestError(f"history turn {i} has unknown role {item.get('role')!r}")
                turns.append(Turn(_TAG_ROLES[role], item.get("content", "")))
            else:
                raise IngestError(f"history turn {i} is neither text nor an object")
        return tuple(turns)
    raise IngestError(f"unsupported history value of type {type(value).__name__}")


@dataclass(frozen=True)
class SampleRule:
    count: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("sample.count must be positive")
        if self.seed < 0:
            raise ValueError("sample.seed must be non-negative")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    path: str | None
    adapter: Adapter
    task: TaskFormat
    split: str = "test"
    sample: SampleRule | None = None
    columns: Mapping[str, str] = field(default_factory=dict)
    label_map: Mapping[str, int | None] | None = None
    default_label: int | None = None
    include_sources: tuple[str, ...] = ()
    exclude_sources: tuple[str, ...] = ()
    language: Language = Language.EN
    skip: str | None = None
    expected_count: int | None = None

    def __post_init__(self) -> None:
        if self.task not in _ADAPTER_TASKS[self.adapter]:
            raise ValueError(
                f"manifest {self.name!r}: adapter {self.adapter.value} cannot produce {self.task.value} examples"
            )
        if self.skip is None and not self.path:
            raise ValueError(f"manifest {self.name!r}: path is required unless the entry is skipped")

    @classmethod
    def from_dict(
        cls,
        d: Mapping[str, Any],
        base_dir: str | os.PathLike | None = None,
        default_seed: int = 0,
    ) -> "DatasetManifest":
        d = dict(d)
        d.setdefault("path", None)
        preset = d.pop("preset", None)
        merged: dict[str, Any] = {}
        if preset is not None:
            presets = adapter_table()["presets"]
            if preset not in presets:
                raise ValueError(f"unknown preset {preset!r}")
            merged.update(presets[preset])
        adapter = Adapter(d.get("adapter", merged.get("adapter", "unified")))
        base = dict(adapter_table()["defaults"].get(adapter.value, {}))
        columns = dict(base.get("columns", {}))
        columns.update(merged.get("columns", {}))
        columns.update(d.pop("columns", {}) or {})
        for key in ("label_map", "default_label"):
            if key not in d:
                if key in merged:
                    d[key] = merged[key]
                elif key in base:
                    d[key] = base[key]
        d["adapter"] = adapter
        d["columns"] = columns
        d.setdefault("task", _default_task(adapter))
        d["task"] = TaskFormat(d["task"])
        if d.get("sample") is not None:
            d["sample"] = SampleRule(**{"seed": default_seed, **d["sample"]})
        if d.get("label_map") is not None:
            d["label_map"] = {str(k).lower(): v for k, v in d["label_map"].items()}
        for key in ("include_sources", "exclude_sources"):
            d[key] = tuple(d.get(key) or ())
        d["language"] = Language(d.get("language", "en"))
        path = d.get("path")
        if path and base_dir is not None and not os.path.isabs(path):
            d["path"] = str(Path(base_dir) / path)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"manifest {d.get('name')!r}: unknown fields {sorted(unknown)}")
        return cls(**d)


def _default_task(adapter: Adapter) -> TaskFormat:
    return {
        Adapter.NLI_TRIPLE: TaskFormat.NLI,
        Adapter.QA_TUPLE: TaskFormat.QA,
        Adapter.DIALOGUE_TRIPLE: TaskFormat.DIALOGUE,
        Adapter.SUMMARY_PAIR: TaskFormat.SUMMARIZATION,
    }.get(adapter, TaskFormat.NLI)


@lru_cache(maxsize=1)
def adapter_table() -> dict[str, Any]:
    text = resources.files(__package__).joinpath("adapters.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def load_manifests(path: str | os.PathLike, default_seed: int = 0) -> list[DatasetManifest]:
    """Read a YAML manifest file: a list of entries or ``{manifests: [...]}``.

    Relative source paths resolve against the manifest file's directory.
    Sample rules without a seed get ``default_seed``.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict):
        data = data.get("manifests", [])
    return [DatasetManifest.from_dict(d, path.parent, default_seed) for d in data or []]


def _read_rows(path: str) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        if path.endswith(".json"):
            data = json.load(fh)
            if isinstance(data, dict):
                data = data.get("data", [])
            yield from enumerate(data, start=1)
            return
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except ValueError as exc:
                    raise IngestError(f"{path}: line {lineno}: {exc}") from exc


def _label(raw: Any, m: DatasetManifest) -> int | None:
    """Gold label for a raw value; None means drop the row."""
    if raw is None and m.default_label is not None:
        return m.default_label
    if m.label_map is not None:
        key = str(raw).strip().lower()
        if key in m.label_map:
            return m.label_map[key]
    if isinstance(raw, bool):
        return int(raw)
    if raw in (0, 1):
        return int(raw)
    if isinstance(raw, str) and raw.strip().lower() in ("0", "1", "true", "false"):
        return 1 if raw.strip().lower() in ("1", "true") else 0
    raise IngestError(f"unmapped label value {raw!r}")


@dataclass
class _Tally:
    rows: int = 0
    dropped_label: int = 0
    dropped_filter: int = 0
    dropped_invalid: int = 0
    first_error: str | None = None


def _row_examples(row: Mapping[str, Any], m: DatasetManifest, tally: _Tally) -> list[tuple[Any, ...]]:
    """Adapter payloads for one row: list of (kind, fields..., label, source, meta)."""
    col = m.columns

    def get(key: str) -> Any:
        return row.get(col[key]) if key in col else None

    upstream = get("source")
    if upstream is not None:
        if m.include_sources and upstream not in m.include_sources:
            tally.dropped_filter += 1
            return []
        if upstream in m.exclude_sources:
            tally.dropped_filter += 1
            return []
    source = m.name
    subset = get("subset")
    if subset is not None:
        source = f"{m.name}/{subset}"
    meta = {"upstream_source": upstream} if upstream is not None else None

    out = []
    if m.adapter is Adapter.QA_TUPLE and "positive_answer" in col:
        out.append((get("passage"), get("question"), get("positive_answer"), 1))
        out.append((get("passage"), get("question"), get("negative_answer"), 0))
    elif m.adapter is Adapter.DIALOGUE_TRIPLE and "positive_response" in col:
        out.append((get("document"), get("history"), get("positive_response"), 1))
        out.append((get("document"), get("history"), get("negative_response"), 0))
    else:
        label = _label(get("label"), m)
        if label is None:
            tally.dropped_label += 1
            return []
        if m.adapter is Adapter.NLI_TRIPLE:
            out.append((get("premise"), get("hypothesis"), label))
        elif m.adapter is Adapter.QA_TUPLE:
            out.append((get("passage"), get("question"), get("answer"), label))
        elif m.adapter is Adapter.DIALOGUE_TRIPLE:
            out.append((get("document"), get("history"), get("response"), label))
        else:
            out.append((get("document"), get("summary"), label))
    return [(fields, source, meta) for fields in out]


def load_source(m: DatasetManifest) -> tuple[list[Example], _Tally]:
    """All examples a manifest's source yields, before sampling."""
    if m.path is None or not os.path.exists(m.path):
        raise IngestError(f"{m.name}: source not found: {m.path}")
    tally = _Tally()
    examples: list[Example] = []
    for lineno, row in _read_rows(m.path):
        tally.rows += 1
        if m.adapter is Adapter.UNIFIED:
            try:
                e = Example.from_record(row)
            except (KeyError, ValueError, TypeError) as exc:
                raise IngestError(f"{m.path}: line {lineno}: {exc}") from exc
            upstream = e.source
            if (m.include_sources and upstream not in m.include_sources) or upstream in m.exclude_sources:
                tally.dropped_filter += 1
                continue
            if e.task is not m.task and not (
                m.task is TaskFormat.NLI and e.task is TaskFormat.SUMMARIZATION
            ):
                tally.dropped_filter += 1
                continue
            if e.task is TaskFormat.SUMMARIZATION and m.task is TaskFormat.NLI:
                e = summary_to_nli(e)
            examples.append(e)
            continue
        try:
            payloads = _row_examples(row, m, tally)
        except IngestError as exc:
            tally.dropped_invalid += 1
            tally.first_error = tally.first_error or f"line {lineno}: {exc}"
            continue
        for fields, source, meta in payloads:
            ordinal = len(examples)
            eid = f"{m.name}/{m.split}/{ordinal}"
            try:
                if m.adapter is Adapter.NLI_TRIPLE:
                    e = from_nli_triple(*fields, source, example_id=eid, language=m.language)
                elif m.adapter is Adapter.QA_TUPLE:
                    e = from_qa_tuple(*fields, source, example_id=eid, language=m.language)
                elif m.adapter is Adapter.DIALOGUE_TRIPLE:
                    doc, history, response, label = fields
                    e = from_dialogue_triple(
                        doc, parse_history(history), response, label, source,
                        example_id=eid, language=m.language,
                    )
                else:
                    e = from_summary_pair(*fields, source, example_id=eid, language=m.language)
                    if m.task is TaskFormat.NLI:
                        e = summary_to_nli(e)
            except IngestError as exc:
                tally.dropped_invalid += 1
                tally.first_error = tally.first_error or f"line {lineno}: {exc}"
                continue
            if meta is not None:
                e = replace(e, meta=meta)
            examples.append(e)
    return examples, tally


def sample_indices(available: int, rule: SampleRule) -> list[int]:
    """Uniform sample without replacement, returned in source order."""
    if rule.count > available:
        raise IngestError(f"sample of {rule.count} requested but only {available} records available")
    return sorted(random.Random(rule.seed).sample(range(available), rule.count))


@dataclass
class ManifestReport:
    name: str
    requested: int | None
    available: int
    yielded: int
    skipped: str | None = None
    expected: int | None = None
    dropped: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class AssemblyReport:
    entries: list[ManifestReport] = field(default_factory=list)
    algorithm: str = SAMPLING_ALGORITHM

    @property
    def total_yielded(self) -> int:
        return sum(e.yielded for e in self.entries)

    @property
    def total_expected(self) -> int:
        return sum(e.expected or 0 for e in self.entries)

    @property
    def failed(self) -> list[ManifestReport]:
        return [e for e in self.entries if e.error is not None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sampling_algorithm": self.algorithm,
            "manifests": [e.to_dict() for e in self.entries],
            "total_yielded": self.total_yielded,
            "total_expected": self.total_expected,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def _assemble_one(m: DatasetManifest) -> tuple[list[Example], ManifestReport]:
    requested = m.sample.count if m.sample else None
    if m.skip is not None:
        return [], ManifestReport(m.name, requested, 0, 0, skipped=m.skip, expected=m.expected_count)
    examples, tally = load_source(m)
    available = len(examples)
    if m.sample is not None:
        examples = [examples[i] for i in sample_indices(available, m.sample)]
    dropped = {
        "label": tally.dropped_label,
        "filter": tally.dropped_filter,
        "invalid": tally.dropped_invalid,
    }
    report = ManifestReport(m.name, requested, available, len(examples), expected=m.expected_count, dropped=dropped)
    return examples, report


def assemble_bench(
    manifests: Sequence[DatasetManifest], strict: bool = True, workers: int = 4
) -> tuple[list[Example], AssemblyReport]:
    """Concatenate every manifest's examples in manifest order.

    With ``strict=False`` a failing manifest is recorded in the report
    (``error``) instead of raising.
    """

    def run(m: DatasetManifest):
        try:
            return _assemble_one(m)
        except (IngestError, OSError) as exc:
            if strict:
                raise
            return [], ManifestReport(
                m.name, m.sample.count if m.sample else None, 0, 0,
                expected=m.expected_count, error=str(exc),
            )

    report = AssemblyReport()
    out: list[Example] = []
    if not manifests:
        return out, report
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(manifests)))) as pool:
        for examples, entry in pool.map(run, manifests):
            out.extend(examples)
            report.entries.append(entry)
    seen: set[str] = set()
    for e in out:
        if e.id in seen:
            raise IngestError(f"duplicate example id {e.id!r} across manifests")
        seen.add(e.id)
    return out, report


def bundled_manifest_path(name: str = "hallucination_bench.yaml") -> Path:
    return Path(str(resources.files(__package__).joinpath("manifests", name)))

