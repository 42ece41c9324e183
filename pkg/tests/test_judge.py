import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundcheck.judge import (
    ChunkingPolicy,
    JudgeError,
    ParseMode,
    VerdictParseError,
    VerdictRecord,
    aggregate_chunk_labels,
    chunk_document,
    chunk_spans,
    judge_example,
    judge_many,
    parse_classifier_output,
    parse_verdict,
    read_verdicts,
    write_verdicts,
)
from groundcheck.llm import ChatClient, DiskCache, PermanentBackendError
from groundcheck.prompts import PromptKind

from helpers import nli, qa, verdict_json


def reassemble(chunks, overlap):
    return chunks[0] + "".join(c[overlap:] for c in chunks[1:])


def test_parse_strict():
    v = parse_verdict('{"rationale": "Matches the document.", "output": 1}')
    assert (v.label, v.rationale, v.mode) == (1, "Matches the document.", ParseMode.STRICT)


def test_parse_salvaged_from_prose():
    v = parse_verdict('Here is my answer: {"rationale": "x", "output": 0} Thanks.')
    assert (v.label, v.rationale, v.mode) == (0, "x", ParseMode.SALVAGED)


def test_parse_string_output_is_salvaged():
    v = parse_verdict('{"rationale": "x", "output": "1"}')
    assert v.label == 1 and v.mode is ParseMode.SALVAGED


def test_parse_trailing_comma_regex_fallback():
    v = parse_verdict('{\n"rationale": "fine",\n"output": 1,\n}')
    assert (v.label, v.rationale, v.mode) == (1, "fine", ParseMode.SALVAGED)


@pytest.mark.parametrize("raw", ["I think it's supported.", '{"output": 2}', '{"output": 1.5}', ""])
def test_parse_failure(raw):
    with pytest.raises(VerdictParseError):
        parse_verdict(raw)


def test_parse_classifier_bare_label():
    assert parse_classifier_output(" 0\n").label == 0
    assert parse_classifier_output('{"rationale": "r", "output": 1}').label == 1


def test_short_document_single_chunk():
    assert chunk_document("abc") == ["abc"]
    assert chunk_document("") == [""]


def test_fifty_thousand_chars_three_chunks():
    doc = "".join(random.Random(1).choice("abcdefghij ") for _ in range(50000))
    spans = chunk_spans(doc, ChunkingPolicy())
    assert spans == [(0, 24000), (22000, 46000), (44000, 50000)]
    chunks = chunk_document(doc)
    assert reassemble(chunks, 2000) == doc


def test_paragraph_snapping():
    policy = ChunkingPolicy(max_chars=100, overlap_chars=10)
    doc = "a" * 85 + "\n\n" + "b" * 100
    spans = chunk_spans(doc, policy)
    assert spans[0] == (0, 87)
    assert spans[1][0] == 77
    # break before the last 20% is ignored
    doc = "a" * 50 + "\n\n" + "b" * 100
    assert chunk_spans(doc, policy)[0] == (0, 100)


@settings(max_examples=200, deadline=None)
@given(
    st.text(alphabet="ab \n", max_size=3000),
    st.integers(1, 400),
    st.data(),
)
def test_chunks_reassemble(doc, max_chars, data):
    overlap = data.draw(st.integers(0, max_chars - 1))
    policy = ChunkingPolicy(max_chars, overlap)
    chunks = chunk_document(doc, policy)
    assert reassemble(chunks, overlap) == doc
    assert all(len(c) <= max_chars for c in chunks)
    spans = chunk_spans(doc, policy)
    for (s0, e0), (s1, _) in zip(spans, spans[1:]):
        assert e0 - s1 == overlap


@given(st.lists(st.sampled_from([0, 1]), min_size=1, max_size=20))
def test_aggregate_is_max_with_first_index(labels):
    final, idx = aggregate_chunk_labels(labels)
    assert final == max(labels)
    assert labels[idx] == final and final not in labels[:idx]


def test_policy_validation():
    with pytest.raises(ValueError):
        ChunkingPolicy(max_chars=10, overlap_chars=10)
    with pytest.raises(ValueError):
        ChunkingPolicy(boundary="sentence")


def test_judge_example_single_call():
    client = ChatClient.mock(script=[{"respond": verdict_json(0, "wrong year")}])
    v = judge_example(nli(), client)
    assert (v.label, v.rationale, v.chunked) == (0, "wrong year", False)
    sent = client.transport.log[0].messages
    assert len(sent) == 1 and sent[0]["content"].startswith("You will classify whether the claim")


def test_judge_example_classifier_kind():
    client = ChatClient.mock(script=[{"respond": "1"}])
    v = judge_example(nli(), client, PromptKind.CLASSIFIER_FLAT)
    assert v.label == 1
    assert client.transport.log[0].messages[0]["content"].startswith("# Context:")


def test_judge_example_chunked_any_supports():
    doc = "x" * 50000
    client = ChatClient.mock(
        script=[{"respond": verdict_json(0, "a")}, {"respond": verdict_json(1, "b")}, {"respond": verdict_json(1, "c")}]
    )
    v = judge_example(nli(doc=doc), client)
    assert v.label == 1 and v.rationale == "b"
    assert v.chunk_verdicts == ((0, 0), (1, 1), (2, 1))
    assert client.transport.calls == 3


def test_judge_example_chunked_all_reject():
    client = ChatClient.mock(responder=lambda m: verdict_json(0, "no"))
    v = judge_example(nli(doc="y" * 30000), client)
    assert v.label == 0 and len(v.chunk_verdicts) == 2


def test_unparseable_becomes_judge_error():
    client = ChatClient.mock(script=[{"respond": "no idea"}])
    with pytest.raises(JudgeError) as info:
        judge_example(qa("q1"), client)
    assert info.value.example_id == "q1"


def test_retries_exhausted_becomes_judge_error():
    client = ChatClient.mock(script=[{"fail": "timeout"}] * 3)
    with pytest.raises(JudgeError):
        judge_example(nli(), client)


def test_permanent_error_propagates():
    client = ChatClient.mock(script=[{"fail": "auth"}])
    with pytest.raises(PermanentBackendError):
        judge_example(nli(), client)


def test_judge_many_orders_and_records_failures(tmp_path):
    exs = [nli(f"e{i}", doc=f"doc {i}") for i in range(6)]

    def responder(messages):
        body = messages[0]["content"]
        if "doc 3" in body:
            return "garbage"
        return verdict_json(int("doc 2" in body or "doc 4" in body))

    client = ChatClient.mock(responder=responder, max_in_flight=3)
    recs = judge_many(exs, client, jobs=4)
    assert [r.id for r in recs] == [e.id for e in exs]
    assert [r.label for r in recs] == [0, 0, 1, None, 1, 0]
    assert recs[3].failed and recs[3].error
    assert recs[0].template_id == "generative_nli" and recs[0].model == "mock-model"

    path = tmp_path / "v.jsonl"
    write_verdicts(path, recs)
    assert read_verdicts(path) == recs


def test_judge_many_reuses_previous():
    exs = [nli("a"), nli("b")]
    prev = {
        "a": VerdictRecord("a", 1, "generative_nli", "v", "m", "strict"),
        "b": VerdictRecord("b", None, "generative_nli", "v", "m", error="x"),
    }
    client = ChatClient.mock(script=[{"respond": verdict_json(0)}])
    recs = judge_many(exs, client, previous=prev)
    assert [r.label for r in recs] == [1, 0]
    assert client.transport.calls == 1


def test_judge_uses_cache(tmp_path):
    client = ChatClient.mock(script=[{"respond": verdict_json(1)}])
    client.cache = DiskCache(tmp_path)
    judge_example(nli(), client)
    v = judge_example(nli(), client)
    assert v.label == 1 and client.transport.calls == 1


def test_verdict_record_json():
    r = VerdictRecord("a", 1, "t", "v", "m", "strict", True, [0, 1], "why")
    assert VerdictRecord.from_dict(json.loads(r.to_json())) == r
