import json

import pytest

from groundcheck.llm import ChatClient
from groundcheck.prompts import SynthesisKind
from groundcheck.schema import HallucinationErrorType, Language, Role, TaskFormat, validate_example
from groundcheck.synthesis import (
    MAX_ATTEMPTS,
    SynthesisFailed,
    SynthesisJob,
    hallucinate_answer,
    parse_turns,
    plan_jobs,
    qa_to_dialogue,
    read_jobs,
    run_jobs,
    translate,
    unfaithful_summary,
    write_jobs,
)

from helpers import GOLDEN_FIXTURES, dialog, nli, qa, summ

QA = GOLDEN_FIXTURES["qa"]


@pytest.mark.parametrize("etype", list(HallucinationErrorType))
def test_hallucinate_each_type(etype):
    client = ChatClient.mock(script=[{"respond": "1903"}])
    out = hallucinate_answer(QA, etype, client)
    assert out.label == 0 and out.assessed == "1903"
    assert out.hallucination_type is etype
    assert out.id == f"{QA.id}#halluc-{etype.value}"
    assert out.conversation[0] == QA.conversation[0] and out.document == QA.document
    assert validate_example(out) == []


def test_hallucinate_rejects_unchanged_then_fails():
    client = ChatClient.mock(script=[{"respond": "1911"}, {"respond": "  1911 "}, {"respond": '"1911"'}])
    with pytest.raises(SynthesisFailed) as info:
        hallucinate_answer(QA, "entity", client)
    assert info.value.record.attempts == MAX_ATTEMPTS
    assert "equals the original" in info.value.record.last_error


def test_hallucinate_strips_fences_and_quotes():
    client = ChatClient.mock(script=[{"respond": "```\n\"In 1920.\"\n```"}])
    assert hallucinate_answer(QA, "invented", client).assessed == "In 1920."


def test_hallucinate_requires_supported_qa():
    with pytest.raises(ValueError):
        hallucinate_answer(qa(label=0), "entity", ChatClient.mock(responder=lambda m: "x"))
    with pytest.raises(ValueError):
        hallucinate_answer(nli(), "entity", ChatClient.mock(responder=lambda m: "x"))


def test_unfaithful_summary():
    s = GOLDEN_FIXTURES["summarization"]
    client = ChatClient.mock(script=[{"respond": ""}, {"respond": "The council rejected the bike lanes."}])
    out = unfaithful_summary(s, client)
    assert out.label == 0 and out.assessed == "The council rejected the bike lanes."
    assert out.task is TaskFormat.SUMMARIZATION and validate_example(out) == []


def _turns(*contents):
    return json.dumps([{"role": "user" if i % 2 == 0 else "assistant", "content": c} for i, c in enumerate(contents)])


@pytest.mark.parametrize("label", [0, 1])
def test_qa_to_dialogue_keeps_label(label):
    e = qa("q", doc="doc", q="When?", a="1911", label=label)
    client = ChatClient.mock(script=[{"respond": "Sure:\n" + _turns("Hi", "Hello", "When?", "1911")}])
    out = qa_to_dialogue(e, client)
    assert out.task is TaskFormat.DIALOGUE and out.label == label
    assert [t.role for t in out.conversation] == [Role.USER, Role.ASSISTANT] * 2
    assert out.id == "q#dialog" and validate_example(out) == []


def test_qa_to_dialogue_retries_bad_structure():
    bad_order = json.dumps([{"role": "assistant", "content": "x"}, {"role": "user", "content": "y"}])
    client = ChatClient.mock(script=[{"respond": "not json"}, {"respond": bad_order}, {"respond": _turns("a", "b")}])
    assert len(qa_to_dialogue(QA, client).conversation) == 2
    assert client.transport.calls == 3


def test_parse_turns_roles():
    with pytest.raises(ValueError):
        parse_turns('[{"role": "system", "content": "x"}]')


def test_translate_preserves_structure():
    d = GOLDEN_FIXTURES["dialogue"]
    payload = {"document": "La biblioteca abre a las 9.", "turns": ["Hola", "Abre a las 9.", "¿Y los domingos?", "Cerrada."]}
    client = ChatClient.mock(script=[{"respond": json.dumps({"document": "x", "turns": ["uno"]})}, {"respond": json.dumps(payload, ensure_ascii=False)}])
    out = translate(d, "es", client)
    assert out.language is Language.ES and out.label == d.label
    assert len(out.conversation) == len(d.conversation)
    assert [t.role for t in out.conversation] == [t.role for t in d.conversation]
    assert out.document == payload["document"] and out.id.endswith("#es")
    assert validate_example(out) == []


def test_translate_same_language_rejected():
    with pytest.raises(ValueError):
        translate(nli(), "en", ChatClient.mock(responder=lambda m: ""))


def test_job_validation():
    with pytest.raises(ValueError):
        SynthesisJob(QA, SynthesisKind.HALLUCINATE_ANSWER)
    with pytest.raises(ValueError):
        SynthesisJob(QA, SynthesisKind.TRANSLATE)
    with pytest.raises(ValueError):
        SynthesisJob(summ(), SynthesisKind.QA_TO_DIALOGUE)
    with pytest.raises(ValueError):
        SynthesisJob(QA, SynthesisKind.QA_TO_DIALOGUE, error_type="entity")


def test_plan_round_robin_and_job_file(tmp_path):
    exs = [qa(f"q{i}", label=1) for i in range(7)] + [qa("neg", label=0), summ()]
    jobs = plan_jobs(exs, "hallucinate", backend="gen")
    assert [j.input.id for j in jobs] == [f"q{i}" for i in range(7)]
    types = [j.error_type for j in jobs]
    assert types[:6] == list(HallucinationErrorType) and types[6] is HallucinationErrorType.ENTITY
    two = plan_jobs(exs[:1], "hallucinate", error_types=["subjective", "relation"], variants=3)
    assert [j.error_type.value for j in two] == ["subjective", "relation", "subjective"]
    path = tmp_path / "jobs.jsonl"
    write_jobs(path, jobs)
    assert read_jobs(path, exs) == jobs
    assert len(plan_jobs(exs + [dialog()], "translate", target_language="es")) == 10


def test_run_jobs_sorted_with_failures():
    exs = [qa(f"q{i}", doc=f"doc {i}", a=f"ans {i}", label=1) for i in (3, 1, 2)]

    def responder(messages):
        body = messages[0]["content"]
        return "ans 2" if "doc 2" in body else "changed"

    jobs = plan_jobs(exs, "hallucinate", error_types=["entity"])
    outputs, failures = run_jobs(jobs, ChatClient.mock(responder=responder), workers=3)
    assert [o.id for o in outputs] == ["q1#halluc-entity", "q3#halluc-entity"]
    assert [f.id for f in failures] == ["q2"] and failures[0].kind == "hallucinate"


def test_backend_exhaustion_is_failed_job():
    client = ChatClient.mock(responder=None, script=[{"fail": "throttle"}] * 3)
    with pytest.raises(SynthesisFailed) as info:
        unfaithful_summary(summ(), client)
    assert info.value.record.attempts == 1
