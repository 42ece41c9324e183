"""LLM-backed data synthesis: hallucinated answers, dialogues, unfaithful summaries, translations.

Every job gets at most :data:`MAX_ATTEMPTS` generations. Outputs that fail the
structural checks are regenerated; a job that never passes raises
:class:`SynthesisFailed` carrying a :class:`FailedJob` record.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .llm import ChatClient, ExhaustedRetriesError
from .prompts import RenderedPrompt, SynthesisKind, render_synthesis
from .schema import (
    Example,
    HallucinationErrorType,
    Language,
    Role,
    TaskFormat,
    Turn,
    validate_example,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class SynthesisJob:
    input: Example
    kind: SynthesisKind
    error_type: HallucinationErrorType | None = None
    target_language: Language | None = None
    backend: str = ""

    def __post_init__(self) -> None:
        kind = SynthesisKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (kind is SynthesisKind.HALLUCINATE_ANSWER) != (self.error_type is not None):
            raise ValueError("error_type is required for, and only for, hallucinate jobs")
        if (kind is SynthesisKind.TRANSLATE) != (self.target_language is not None):
            raise ValueError("target_language is required for, and only for, translate jobs")
        if self.error_type is not None:
            object.__setattr__(self, "error_type", HallucinationErrorType(self.error_type))
        if self.target_language is not None:
            object.__setattr__(self, "target_language", Language(self.target_language))
        task = self.input.task
        if kind in (SynthesisKind.HALLUCINATE_ANSWER, SynthesisKind.QA_TO_DIALOGUE) and task is not TaskFormat.QA:
            raise ValueError(f"{kind.value} jobs need a QA example, got {task.value}")
        if kind is SynthesisKind.UNFAITHFUL_SUMMARY and task is not TaskFormat.SUMMARIZATION:
            raise ValueError(f"{kind.value} jobs need a summarization example, got {task.value}")

    def to_record(self) -> dict:
        rec = {"id": self.input.id, "kind": self.kind.value, "backend": self.backend}
        if self.error_type is not None:
            rec["error_type"] = self.error_type.value
        if self.target_language is not None:
            rec["target_language"] = self.target_language.value
        return rec

    @property
    def output_id(self) -> str:
        if self.kind is SynthesisKind.HALLUCINATE_ANSWER:
            return f"{self.input.id}#halluc-{self.error_type.value}"
        if self.kind is SynthesisKind.QA_TO_DIALOGUE:
            return f"{self.input.id}#dialog"
        if self.kind is SynthesisKind.UNFAITHFUL_SUMMARY:
            return f"{self.input.id}#unfaithful"
        return f"{self.input.id}#{self.target_language.value}"


@dataclass(frozen=True)
class FailedJob:
    id: str
    kind: str
    attempts: int
    last_error: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, ensure_ascii=False)


class SynthesisFailed(RuntimeError):
    def __init__(self, record: FailedJob):
        self.record = record
        super().__init__(f"{record.kind} job for {record.id} failed after {record.attempts} attempts: {record.last_error}")


class _Reject(ValueError):
    """Model output failed a structural check; try again."""


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def _strip_fences(text: str) -> str:
    m = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    return m.group(1) if m else text


def _plain_text(raw: str) -> str:
    text = _strip_fences(raw).strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    if not text:
        raise _Reject("empty generation")
    return text


def _json_payload(raw: str, opener: str):
    text = _strip_fences(raw)
    start = text.find(opener)
    if start == -1:
        raise _Reject(f"no JSON {'array' if opener == '[' else 'object'} in output")
    try:
        value, _ = json.JSONDecoder().raw_decode(text, start)
    except ValueError as exc:
        raise _Reject(f"malformed JSON: {exc}") from exc
    return value


def _generate(job: SynthesisJob, client: ChatClient, build) -> Example:
    prompt: RenderedPrompt = render_synthesis(job)
    messages = prompt.as_messages()
    last = "no attempts made"
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            completion = client.cached_complete(
                messages, template_version=f"{prompt.template_version}/attempt{attempt}"
            )
        except ExhaustedRetriesError as exc:
            raise SynthesisFailed(FailedJob(job.input.id, job.kind.value, attempt, str(exc))) from exc
        try:
            out = build(completion.text)
        except _Reject as exc:
            last = str(exc)
            logger.debug("%s attempt %d rejected: %s", job.output_id, attempt, exc)
            continue
        problems = validate_example(out)
        if problems:
            last = "; ".join(problems)
            continue
        return out
    raise SynthesisFailed(FailedJob(job.input.id, job.kind.value, MAX_ATTEMPTS, last))


def _require_label(e: Example, label: int, task: TaskFormat) -> None:
    if e.task is not task:
        raise ValueError(f"{e.id}: expected a {task.value} example, got {e.task.value}")
    if e.label != label:
        raise ValueError(f"{e.id}: expected label {label}, got {e.label}")


def hallucinate_answer(
    e: Example, error_type: HallucinationErrorType | str, client: ChatClient
) -> Example:
    """Rewrite a supported QA answer into a hallucinated one of the given error type."""
    _require_label(e, 1, TaskFormat.QA)
    job = SynthesisJob(e, SynthesisKind.HALLUCINATE_ANSWER, error_type=HallucinationErrorType(error_type))
    original = _normalize(e.assessed)

    def build(raw: str) -> Example:
        answer = _plain_text(raw)
        if _normalize(answer) == original:
            raise _Reject("generated answer equals the original")
        return replace(
            e,
            id=job.output_id,
            conversation=(e.conversation[0], Turn.assistant(answer)),
            label=0,
            hallucination_type=job.error_type,
            rationale=None,
        )

    return _generate(job, client, build)


def unfaithful_summary(e: Example, client: ChatClient) -> Example:
    _require_label(e, 1, TaskFormat.SUMMARIZATION)
    job = SynthesisJob(e, SynthesisKind.UNFAITHFUL_SUMMARY)
    original = _normalize(e.assessed)

    def build(raw: str) -> Example:
        summary = _plain_text(raw)
        if _normalize(summary) == original:
            raise _Reject("generated summary equals the original")
        return replace(e, id=job.output_id, conversation=(Turn.assistant(summary),), label=0, rationale=None)

    return _generate(job, client, build)


def parse_turns(raw: str) -> tuple[Turn, ...]:
    value = _json_payload(raw, "[")
    if not isinstance(value, list):
        raise _Reject("dialogue must be a JSON array")
    turns = []
    for i, item in enumerate(value):
        if not isinstance(item, dict) or not isinstance(item.get("content"), str):
            raise _Reject(f"turn {i} is not a {{role, content}} object")
        try:
            role = Role(str(item.get("role", "")).strip().lower())
        except ValueError:
            raise _Reject(f"turn {i} has unknown role {item.get('role')!r}") from None
        turns.append(Turn(role, item["content"].strip()))
    return tuple(turns)


def qa_to_dialogue(e: Example, client: ChatClient) -> Example:
    """Expand a QA pair into an alternating user/assistant conversation; the label is kept."""
    if e.task is not TaskFormat.QA:
        raise ValueError(f"{e.id}: expected a qa example, got {e.task.value}")
    job = SynthesisJob(e, SynthesisKind.QA_TO_DIALOGUE)

    def build(raw: str) -> Example:
        turns = parse_turns(raw)
        if len(turns) < 2:
            raise _Reject(f"dialogue needs at least 2 turns, got {len(turns)}")
        return replace(e, id=job.output_id, task=TaskFormat.DIALOGUE, conversation=turns, rationale=None)

    return _generate(job, client, build)


def translate(e: Example, target: Language | str, client: ChatClient) -> Example:
    target = Language(target)
    if e.language is target:
        raise ValueError(f"{e.id}: already in {target.value}")
    job = SynthesisJob(e, SynthesisKind.TRANSLATE, target_language=target)

    def build(raw: str) -> Example:
        value = _json_payload(raw, "{")
        if not isinstance(value, dict):
            raise _Reject("translation must be a JSON object")
        doc, turns = value.get("document"), value.get("turns")
        if not isinstance(doc, str) or not isinstance(turns, list) or not all(isinstance(t, str) for t in turns):
            raise _Reject("translation needs a 'document' string and a 'turns' string array")
        if len(turns) != len(e.conversation):
            raise _Reject(f"turn count changed from {len(e.conversation)} to {len(turns)}")
        return replace(
            e,
            id=job.output_id,
            document=doc,
            conversation=tuple(Turn(t.role, c.strip()) for t, c in zip(e.conversation, turns)),
            language=target,
            rationale=None,
        )

    return _generate(job, client, build)


def run_job(job: SynthesisJob, client: ChatClient) -> Example:
    if job.kind is SynthesisKind.HALLUCINATE_ANSWER:
        return hallucinate_answer(job.input, job.error_type, client)
    if job.kind is SynthesisKind.QA_TO_DIALOGUE:
        return qa_to_dialogue(job.input, client)
    if job.kind is SynthesisKind.UNFAITHFUL_SUMMARY:
        return unfaithful_summary(job.input, client)
    return translate(job.input, job.target_language, client)


def _eligible(e: Example, kind: SynthesisKind, target: Language | None) -> bool:
    if kind is SynthesisKind.HALLUCINATE_ANSWER:
        return e.task is TaskFormat.QA and e.label == 1
    if kind is SynthesisKind.QA_TO_DIALOGUE:
        return e.task is TaskFormat.QA
    if kind is SynthesisKind.UNFAITHFUL_SUMMARY:
        return e.task is TaskFormat.SUMMARIZATION and e.label == 1
    return e.language is not target


def plan_jobs(
    examples: Iterable[Example],
    kind: SynthesisKind | str,
    error_types: Sequence[HallucinationErrorType | str] | None = None,
    target_language: Language | str | None = None,
    variants: int = 1,
    backend: str = "",
) -> list[SynthesisJob]:
    """Jobs for every eligible example.

    Hallucinate jobs cycle through ``error_types`` (all six by default)
    round-robin across the eligible examples, ``variants`` jobs per example.
    """
    kind = SynthesisKind(kind)
    target = Language(target_language) if target_language is not None else None
    if kind is SynthesisKind.TRANSLATE and target is None:
        raise ValueError("translate jobs need a target language")
    types = [HallucinationErrorType(t) for t in (error_types or list(HallucinationErrorType))]
    cycle = itertools.cycle(types)
    jobs = []
    for e in examples:
        if not _eligible(e, kind, target):
            continue
        n = variants if kind is SynthesisKind.HALLUCINATE_ANSWER else 1
        for _ in range(n):
            jobs.append(
                SynthesisJob(
                    e,
                    kind,
                    error_type=next(cycle) if kind is SynthesisKind.HALLUCINATE_ANSWER else None,
                    target_language=target if kind is SynthesisKind.TRANSLATE else None,
                    backend=backend,
                )
            )
    return jobs


def run_jobs(
    jobs: Sequence[SynthesisJob], client: ChatClient, workers: int = 1
) -> tuple[list[Example], list[FailedJob]]:
    """Run jobs concurrently; outputs and failures come back sorted by input id.

    Permanent backend errors propagate and stop the batch.
    """

    def one(job: SynthesisJob):
        try:
            return run_job(job, client), None
        except SynthesisFailed as exc:
            return None, exc.record

    if workers <= 1:
        results = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    paired = sorted(zip(jobs, results), key=lambda p: p[0].input.id)
    outputs = [r[0] for _, r in paired if r[0] is not None]
    failures = [r[1] for _, r in paired if r[1] is not None]
    return outputs, failures


def write_jobs(path: str | os.PathLike, jobs: Iterable[SynthesisJob]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for j in jobs:
            fh.write(json.dumps(j.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jobs(path: str | os.PathLike, examples: Iterable[Example]) -> list[SynthesisJob]:
    """Load a job file, resolving example ids against ``examples``."""
    by_id = {e.id: e for e in examples}
    jobs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["id"] not in by_id:
                raise KeyError(f"{path}: line {lineno}: unknown example id {rec['id']!r}")
            jobs.append(
                SynthesisJob(
                    by_id[rec["id"]],
                    SynthesisKind(rec["kind"]),
                    error_type=rec.get("error_type"),
                    target_language=rec.get("target_language"),
                    backend=rec.get("backend", ""),
                )
            )
    return jobs


def write_failures(path: str | os.PathLike, failures: Iterable[FailedJob]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in failures:
            fh.write(f.to_json() + "\n")
            n += 1
    return n
