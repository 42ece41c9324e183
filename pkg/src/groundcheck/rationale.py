"""Rationale sampling and label-consistency cleaning.

Each labeled example is judged ``k`` times. If no sample agrees with the gold
label the example is dropped; otherwise the rationale of the first agreeing
sample is kept. Gold labels are never rewritten.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .judge import VerdictParseError, parse_verdict
from .llm import ChatClient, ExhaustedRetriesError
from .prompts import render_generative
from .schema import Example

logger = logging.getLogger(__name__)

DEFAULT_K = 3


class Decision(str, Enum):
    RETAIN = "retain"
    DISCARD = "discard"
    FAILED = "failed"


@dataclass(frozen=True)
class RationaleSample:
    rationale: str
    predicted_label: int
    sample_index: int

    def __post_init__(self) -> None:
        if self.predicted_label not in (0, 1):
            raise ValueError("predicted_label must be 0 or 1")
        if not self.rationale.strip():
            raise ValueError("rationale must be non-empty")


@dataclass(frozen=True)
class FilterOutcome:
    decision: Decision
    agreement: int
    k: int
    retained_rationale: str | None = None
    retained_index: int | None = None


class RationaleError(RuntimeError):
    pass


def sample_rationales(
    e: Example, client: ChatClient, k: int = DEFAULT_K, max_attempts: int = 3
) -> list[RationaleSample]:
    """Draw ``k`` parsed (rationale, label) samples for a labeled example.

    An unparseable generation (or one without a rationale) is re-requested,
    at most ``max_attempts`` times per sample; then the whole job fails.
    """
    if e.label is None:
        raise ValueError(f"example {e.id!r} has no gold label")
    if k < 1:
        raise ValueError("k must be positive")
    prompt = render_generative(e)
    messages = prompt.as_messages()
    samples = []
    for i in range(k):
        last_err: Exception | None = None
        for attempt in range(max_attempts):
            # sample and attempt indices keep cache keys distinct across draws
            salt = f"{prompt.template_version}/sample{i}/attempt{attempt}"
            completion = client.cached_complete(messages, template_version=salt)
            try:
                parsed = parse_verdict(completion.text)
            except VerdictParseError as exc:
                last_err = exc
                continue
            if not parsed.rationale or not parsed.rationale.strip():
                last_err = VerdictParseError("verdict has no rationale")
                continue
            samples.append(RationaleSample(parsed.rationale, parsed.label, i))
            break
        else:
            raise RationaleError(
                f"{e.id}: sample {i} unparseable after {max_attempts} attempts: {last_err}"
            )
    return samples


def consistency_filter(
    gold: int, samples: Sequence[RationaleSample], min_agreement: float = 0.0
) -> FilterOutcome:
    """Keep the first gold-matching rationale unless every sample disagrees.

    ``min_agreement`` optionally demands a larger fraction of agreeing samples.
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    ordered = sorted(samples, key=lambda s: s.sample_index)
    matches = [s for s in ordered if s.predicted_label == gold]
    k = len(ordered)
    if not matches or len(matches) / k < min_agreement:
        return FilterOutcome(Decision.DISCARD, agreement=len(matches), k=k)
    first = matches[0]
    return FilterOutcome(
        Decision.RETAIN,
        agreement=len(matches),
        k=k,
        retained_rationale=first.rationale,
        retained_index=first.sample_index,
    )


@dataclass(frozen=True)
class ReportEntry:
    id: str
    gold: int
    predicted_labels: list[int]
    agreement: int
    k: int
    decision: Decision
    error: str | None = None

    def to_json(self) -> str:
        d = {
            "id": self.id,
            "gold": self.gold,
            "predicted_labels": self.predicted_labels,
            "agreement": self.agreement,
            "k": self.k,
            "decision": self.decision.value,
        }
        if self.error is not None:
            d["error"] = self.error
        return json.dumps(d, ensure_ascii=False)


@dataclass
class RationalizeResult:
    retained: list[Example] = field(default_factory=list)
    discarded: list[ReportEntry] = field(default_factory=list)
    failed: list[ReportEntry] = field(default_factory=list)

    @property
    def report(self) -> list[ReportEntry]:
        """Discards and failures, in input order."""
        return sorted(self.discarded + self.failed, key=lambda r: self._order[r.id])

    _order: dict[str, int] = field(default_factory=dict, repr=False)


def rationalize_dataset(
    examples: Sequence[Example],
    client: ChatClient,
    k: int = DEFAULT_K,
    min_agreement: float = 0.0,
    jobs: int = 1,
) -> RationalizeResult:
    """Attach rationales to agreeing examples; report discards and failed jobs."""
    for e in examples:
        if e.label is None:
            raise ValueError(f"example {e.id!r} has no gold label")

    def run(e: Example):
        try:
            samples = sample_rationales(e, client, k)
        except (RationaleError, ExhaustedRetriesError) as exc:
            logger.warning("rationale job failed for %s: %s", e.id, exc)
            return e, None, exc
        return e, samples, None

    if jobs <= 1:
        results = [run(e) for e in examples]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, examples))

    out = RationalizeResult(_order={e.id: i for i, e in enumerate(examples)})
    for e, samples, err in results:
        if err is not None:
            out.failed.append(ReportEntry(e.id, e.label, [], 0, k, Decision.FAILED, str(err)))
            continue
        outcome = consistency_filter(e.label, samples, min_agreement)
        labels = [s.predicted_label for s in samples]
        if outcome.decision is Decision.RETAIN:
            out.retained.append(replace(e, rationale=outcome.retained_rationale))
        else:
            out.discarded.append(
                ReportEntry(e.id, e.label, labels, outcome.agreement, outcome.k, Decision.DISCARD)
            )
    return out
