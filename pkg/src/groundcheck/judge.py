"""Judging one example against a configured endpoint.

Long documents are split into overlapping chunks, each chunk is judged with
the chunk standing in for the document, and the example is supported if any
chunk supports it. This can accept claims that only hold across chunks.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .llm import BackendError, ChatClient, PermanentBackendError
from .prompts import PromptKind, render_judge
from .schema import Example, ensure_valid

logger = logging.getLogger(__name__)


class ParseMode(str, Enum):
    STRICT = "strict"
    SALVAGED = "salvaged"


class VerdictParseError(ValueError):
    pass


class JudgeError(RuntimeError):
    """Judging failed for one example; carries the id and the cause."""

    def __init__(self, example_id: str, cause: Exception):
        self.example_id = example_id
        self.cause = cause
        super().__init__(f"{example_id}: {cause}")


@dataclass(frozen=True)
class ParsedVerdict:
    label: int
    rationale: str | None
    mode: ParseMode


@dataclass(frozen=True)
class Verdict:
    label: int
    raw: str
    parse_mode: ParseMode
    rationale: str | None = None
    chunk_verdicts: tuple[tuple[int, int], ...] | None = None

    @property
    def chunked(self) -> bool:
        return self.chunk_verdicts is not None


@dataclass(frozen=True)
class ChunkingPolicy:
    max_chars: int = 24000
    overlap_chars: int = 2000
    boundary: str = "paragraph"

    def __post_init__(self) -> None:
        if self.max_chars < 1:
            raise ValueError("max_chars must be positive")
        if not 0 <= self.overlap_chars < self.max_chars:
            raise ValueError("overlap_chars must satisfy 0 <= overlap_chars < max_chars")
        if self.boundary != "paragraph":
            raise ValueError(f"unsupported boundary {self.boundary!r}")


def _binary(value) -> int | None:
    if isinstance(value, bool):
        return None
    if value in (0, 1) and isinstance(value, int):
        return value
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    return None


_OUTPUT_KEY = re.compile(r'"output"\s*:\s*"?\s*([01])(?![0-9.])')


def parse_verdict(raw: str) -> ParsedVerdict:
    """Read ``{"rationale": ..., "output": 0|1}`` from model text.

    A bare JSON object is parsed strictly. Otherwise the first object that
    has a binary ``output`` is salvaged from the surrounding prose, falling
    back to a plain regex on the ``"output"`` key.
    """
    try:
        obj = json.loads(raw)
    except (ValueError, TypeError):
        obj = None
    if isinstance(obj, dict) and "rationale" in obj:
        label = _binary(obj.get("output"))
        if label is not None and type(obj.get("output")) is int:
            rationale = obj["rationale"]
            return ParsedVerdict(label, rationale if isinstance(rationale, str) else None, ParseMode.STRICT)

    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", raw):
        try:
            cand, _ = decoder.raw_decode(raw, m.start())
        except ValueError:
            continue
        if isinstance(cand, dict) and _binary(cand.get("output")) is not None:
            rationale = cand.get("rationale")
            return ParsedVerdict(
                _binary(cand["output"]),
                rationale if isinstance(rationale, str) else None,
                ParseMode.SALVAGED,
            )

    m = _OUTPUT_KEY.search(raw)
    if m:
        rationale = None
        rm = re.search(r'"rationale"\s*:\s*("(?:[^"\\]|\\.)*")', raw)
        if rm:
            try:
                rationale = json.loads(rm.group(1))
            except ValueError:
                rationale = None
        return ParsedVerdict(int(m.group(1)), rationale, ParseMode.SALVAGED)
    raise VerdictParseError(f"no binary 'output' found in model text: {raw[:120]!r}")


_BARE_LABEL = re.compile(r"^\s*([01])\s*$")


def parse_classifier_output(raw: str) -> ParsedVerdict:
    """Classifier endpoints may answer with a bare ``0``/``1``; JSON is also accepted."""
    m = _BARE_LABEL.match(raw)
    if m:
        return ParsedVerdict(int(m.group(1)), None, ParseMode.STRICT)
    return parse_verdict(raw)


def chunk_spans(document: str, policy: ChunkingPolicy) -> list[tuple[int, int]]:
    """``[start, end)`` offsets of each chunk.

    Consecutive chunks overlap by exactly ``policy.overlap_chars``. A chunk
    end is pulled back to just after a paragraph break (``\\n\\n``) when one
    lies in the last 20% of the chunk.
    """
    n = len(document)
    if n <= policy.max_chars:
        return [(0, n)]
    spans = []
    start = 0
    while True:
        end = start + policy.max_chars
        if end >= n:
            spans.append((start, n))
            return spans
        window_lo = start + (policy.max_chars * 4) // 5
        brk = document.rfind("\n\n", window_lo, end)
        if brk != -1:
            snapped = brk + 2
            # the snapped chunk must still leave room to advance past the overlap
            if window_lo <= snapped <= end and snapped - policy.overlap_chars > start:
                end = snapped
        spans.append((start, end))
        start = end - policy.overlap_chars


def chunk_document(document: str, policy: ChunkingPolicy | None = None) -> list[str]:
    policy = policy or ChunkingPolicy()
    return [document[s:e] for s, e in chunk_spans(document, policy)]


def aggregate_chunk_labels(labels: Sequence[int]) -> tuple[int, int]:
    """Final label (max over chunks) and the index of the first chunk reaching it."""
    if not labels:
        raise ValueError("no chunk labels to aggregate")
    final = max(labels)
    return final, list(labels).index(final)


def _judge_once(e: Example, client: ChatClient, kind: PromptKind) -> Verdict:
    # chunks may be whitespace-only; the example itself was validated by the caller
    prompt = render_judge(e, kind, validate=False)
    completion = client.cached_complete(prompt.as_messages(), template_version=prompt.template_version)
    parser = parse_classifier_output if kind is PromptKind.CLASSIFIER_FLAT else parse_verdict
    parsed = parser(completion.text)
    return Verdict(
        label=parsed.label, raw=completion.text, parse_mode=parsed.mode, rationale=parsed.rationale
    )


def judge_example(
    e: Example,
    client: ChatClient,
    template_kind: PromptKind | str = PromptKind.GENERATIVE_CHAT,
    policy: ChunkingPolicy | None = None,
) -> Verdict:
    """Judge ``e``.

    Raises :class:`JudgeError` when retries run out or no label can be
    parsed. :class:`~groundcheck.llm.PermanentBackendError` propagates, since
    every later call would fail the same way.
    """
    ensure_valid(e)
    kind = PromptKind(template_kind)
    policy = policy or ChunkingPolicy()
    chunks = chunk_document(e.document, policy)
    try:
        if len(chunks) == 1:
            return _judge_once(e, client, kind)
        per_chunk = [_judge_once(replace(e, document=c), client, kind) for c in chunks]
    except PermanentBackendError:
        raise
    except (BackendError, VerdictParseError) as exc:
        raise JudgeError(e.id, exc) from exc
    final, idx = aggregate_chunk_labels([v.label for v in per_chunk])
    chosen = per_chunk[idx]
    mode = (
        ParseMode.SALVAGED
        if any(v.parse_mode is ParseMode.SALVAGED for v in per_chunk)
        else ParseMode.STRICT
    )
    return Verdict(
        label=final,
        raw=chosen.raw,
        parse_mode=mode,
        rationale=chosen.rationale,
        chunk_verdicts=tuple((i, v.label) for i, v in enumerate(per_chunk)),
    )


@dataclass(frozen=True)
class VerdictRecord:
    """One line of the verdict sidecar. ``label`` is None when judging failed."""

    id: str
    label: int | None
    template_id: str
    template_version: str
    model: str
    parse_mode: str | None = None
    chunked: bool = False
    chunk_labels: list[int] | None = None
    rationale: str | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.label is None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> "VerdictRecord":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__ if k in d})


def judge_many(
    examples: Sequence[Example],
    client: ChatClient,
    template_kind: PromptKind | str = PromptKind.GENERATIVE_CHAT,
    policy: ChunkingPolicy | None = None,
    jobs: int = 1,
    previous: Mapping[str, VerdictRecord] | None = None,
) -> list[VerdictRecord]:
    """Judge a batch; failures become records with ``label=None``.

    Output order follows ``examples`` regardless of completion order. Ids in
    ``previous`` with a successful verdict are reused without a call.
    """
    kind = PromptKind(template_kind)
    previous = previous or {}

    def run(e: Example) -> VerdictRecord:
        prompt = render_judge(e, kind)
        base = dict(
            id=e.id,
            template_id=prompt.template_id,
            template_version=prompt.template_version,
            model=client.profile.model_id,
        )
        prior = previous.get(e.id)
        if prior is not None and not prior.failed:
            return prior
        try:
            v = judge_example(e, client, kind, policy)
        except JudgeError as exc:
            logger.warning("judge failed for %s: %s", e.id, exc.cause)
            return VerdictRecord(label=None, error=str(exc.cause), **base)
        return VerdictRecord(
            label=v.label,
            parse_mode=v.parse_mode.value,
            chunked=v.chunked,
            chunk_labels=[lab for _, lab in v.chunk_verdicts] if v.chunked else None,
            rationale=v.rationale,
            **base,
        )

    if jobs <= 1:
        return [run(e) for e in examples]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, examples))


def write_verdicts(path: str | os.PathLike, records: Iterable[VerdictRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
            n += 1
    return n


def read_verdicts(path: str | os.PathLike) -> list[VerdictRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(VerdictRecord.from_dict(json.loads(line)))
    return out
