"""Prompt rendering.

Judge templates (flat classifier input and chat instruction) are reproduced
from the published listings and checked against golden files. Synthesis
prompts are defined here for this toolkit.

Templates are text resources under ``templates/`` using ``{{name}}``
placeholders; rendering is a single substitution pass, so payload text that
happens to contain ``{{...}}`` is never expanded.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from .schema import (
    Example,
    HallucinationErrorType,
    Language,
    TaskFormat,
    Turn,
    ensure_valid,
)


class SynthesisKind(str, Enum):
    HALLUCINATE_ANSWER = "hallucinate"
    QA_TO_DIALOGUE = "dialogue"
    UNFAITHFUL_SUMMARY = "unfaithful-summary"
    TRANSLATE = "translate"


class PromptKind(str, Enum):
    CLASSIFIER_FLAT = "classifier"
    GENERATIVE_CHAT = "generative"


@dataclass(frozen=True)
class RenderedPrompt:
    kind: PromptKind
    template_id: str
    template_version: str
    flat_text: str | None = None
    messages: tuple[dict[str, str], ...] | None = None

    def __post_init__(self) -> None:
        if self.kind is PromptKind.CLASSIFIER_FLAT:
            if self.flat_text is None or self.messages is not None:
                raise ValueError("classifier prompts carry flat_text only")
        elif self.messages is None or self.flat_text is not None:
            raise ValueError("chat prompts carry messages only")

    def as_messages(self) -> list[dict[str, str]]:
        """Chat messages to send; a flat prompt becomes one user message."""
        if self.messages is not None:
            return [dict(m) for m in self.messages]
        return [{"role": "user", "content": self.flat_text}]


_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")


@lru_cache(maxsize=None)
def template_text(name: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def template_version(name: str) -> str:
    return hashlib.sha256(template_text(name).encode("utf-8")).hexdigest()[:12]


def fill(template: str, values: dict[str, str]) -> str:
    def sub(m: re.Match) -> str:
        return values[m.group(1)]

    return _PLACEHOLDER.sub(sub, template)


def _render(name: str, values: dict[str, str]) -> tuple[str, str]:
    return fill(template_text(name), values), template_version(name)


def format_turns(turns: tuple[Turn, ...] | list[Turn]) -> str:
    return "\n".join(f"{t.role.value}: {t.content}" for t in turns)


def _judge_values(e: Example) -> dict[str, str]:
    values = {"document": e.document}
    if e.task is TaskFormat.NLI:
        values["claim"] = e.assessed
    elif e.task is TaskFormat.SUMMARIZATION:
        values["summary"] = e.assessed
    elif e.task is TaskFormat.QA:
        values["question"] = e.conversation[0].content
        values["answer"] = e.assessed
    else:
        values["conversation"] = format_turns(e.conversation)
    return values


def render_classifier(e: Example, validate: bool = True) -> RenderedPrompt:
    if validate:
        ensure_valid(e)
    name = f"classifier_{e.task.value}"
    text, version = _render(name, _judge_values(e))
    return RenderedPrompt(
        PromptKind.CLASSIFIER_FLAT, template_id=name, template_version=version, flat_text=text
    )


def render_generative(e: Example, validate: bool = True) -> RenderedPrompt:
    if validate:
        ensure_valid(e)
    name = f"generative_{e.task.value}"
    text, version = _render(name, _judge_values(e))
    return RenderedPrompt(
        PromptKind.GENERATIVE_CHAT,
        template_id=name,
        template_version=version,
        messages=({"role": "user", "content": text},),
    )


def render_judge(e: Example, kind: PromptKind, validate: bool = True) -> RenderedPrompt:
    if PromptKind(kind) is PromptKind.CLASSIFIER_FLAT:
        return render_classifier(e, validate)
    return render_generative(e, validate)


# Definitions of the six error categories used to diversify synthetic negatives.
ERROR_TYPE_DEFINITIONS = {
    HallucinationErrorType.ENTITY: "Entity errors, where an incorrect entity alters the factuality of a statement",
    HallucinationErrorType.RELATION: "Relation errors, involving incorrect semantic relationships like verbs or prepositions",
    HallucinationErrorType.SENTENCE: "Sentence errors, where the entire statement contradicts the evidence",
    HallucinationErrorType.INVENTED: "Invented errors, containing fabricated information not found in the context",
    HallucinationErrorType.SUBJECTIVE: "Subjective errors, based on personal opinions rather than facts",
    HallucinationErrorType.UNVERIFIABLE: "Unverifiable errors, where the answer cannot be validated by the given evidence",
}

LANGUAGE_NAMES = {Language.EN: "English", Language.ES: "Spanish"}


def _chat(name: str, values: dict[str, str]) -> RenderedPrompt:
    text, version = _render(name, values)
    return RenderedPrompt(
        PromptKind.GENERATIVE_CHAT,
        template_id=name,
        template_version=version,
        messages=({"role": "user", "content": text},),
    )


def hallucinate_prompt(e: Example, error_type: HallucinationErrorType) -> RenderedPrompt:
    error_type = HallucinationErrorType(error_type)
    return _chat(
        "synth_hallucinate",
        {
            "document": e.document,
            "question": e.conversation[0].content,
            "answer": e.assessed,
            "error_type": error_type.value,
            "error_definition": ERROR_TYPE_DEFINITIONS[error_type],
        },
    )


def dialogue_prompt(e: Example) -> RenderedPrompt:
    return _chat(
        "synth_dialogue",
        {"document": e.document, "question": e.conversation[0].content, "answer": e.assessed},
    )


def unfaithful_summary_prompt(e: Example) -> RenderedPrompt:
    return _chat("synth_unfaithful_summary", {"document": e.document, "summary": e.assessed})


def translate_prompt(e: Example, target: Language) -> RenderedPrompt:
    payload = json.dumps(
        {"document": e.document, "turns": [t.content for t in e.conversation]},
        ensure_ascii=False,
        indent=2,
    )
    return _chat(
        "synth_translate",
        {
            "source_language": LANGUAGE_NAMES[Language(e.language)],
            "target_language": LANGUAGE_NAMES[Language(target)],
            "turn_count": str(len(e.conversation)),
            "payload": payload,
        },
    )


def render_synthesis(job) -> RenderedPrompt:
    """Prompt for a synthesis job (anything with ``input``, ``kind``, ``error_type``, ``target_language``)."""
    kind = SynthesisKind(job.kind)
    e = job.input
    if kind is SynthesisKind.HALLUCINATE_ANSWER:
        return hallucinate_prompt(e, job.error_type)
    if kind is SynthesisKind.QA_TO_DIALOGUE:
        return dialogue_prompt(e)
    if kind is SynthesisKind.UNFAITHFUL_SUMMARY:
        return unfaithful_summary_prompt(e)
    return translate_prompt(e, job.target_language)
