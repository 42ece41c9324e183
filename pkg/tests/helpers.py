import json

from groundcheck.schema import Example, Language, TaskFormat, Turn


def nli(eid="t/nli/0", doc="D", claim="C", label=1, source="test", **kw):
    return Example(eid, TaskFormat.NLI, doc, (Turn.assistant(claim),), label, source=source, **kw)


def qa(eid="t/qa/0", doc="D", q="Q", a="A", label=1, source="test", **kw):
    return Example(eid, TaskFormat.QA, doc, (Turn.user(q), Turn.assistant(a)), label, source=source, **kw)


def summ(eid="t/sum/0", doc="D", summary="S", label=1, source="test", **kw):
    return Example(eid, TaskFormat.SUMMARIZATION, doc, (Turn.assistant(summary),), label, source=source, **kw)


def dialog(eid="t/dlg/0", doc="D", turns=("u1", "a1", "u2", "a2"), label=1, source="test", **kw):
    conv = tuple(Turn.user(t) if i % 2 == 0 else Turn.assistant(t) for i, t in enumerate(turns))
    return Example(eid, TaskFormat.DIALOGUE, doc, conv, label, source=source, **kw)


GOLDEN_FIXTURES = {
    "nli": nli(
        "golden/nli/0",
        doc="The Eiffel Tower was completed in 1889 and stands in Paris.",
        claim="The Eiffel Tower was finished in 1889.",
    ),
    "qa": qa(
        "golden/qa/0",
        doc="Marie Curie won the Nobel Prize in Physics in 1903 and in Chemistry in 1911.",
        q="In which year did Marie Curie win the Chemistry prize?",
        a="1911",
    ),
    "dialogue": dialog(
        "golden/dialogue/0",
        doc="The library opens at 9 am on weekdays and at 10 am on Saturdays. It is closed on Sundays.",
        turns=(
            "Hi, when does the library open on weekdays?",
            "It opens at 9 am on weekdays.",
            "And on Sundays?",
            "It is closed on Sundays.",
        ),
    ),
    "summarization": summ(
        "golden/summarization/0",
        doc="The city council voted 7 to 2 on Tuesday to expand the bike lane network by 40 kilometres over the next three years.",
        summary="The council approved a three-year, 40 km bike lane expansion.",
    ),
}


def verdict_json(label, rationale="because"):
    return json.dumps({"rationale": rationale, "output": label})


# 24-example bench: 6 per task format, half label 0. Each entry is
# (example, scripted judge label).
def fixture_bench():
    rows = []
    gold = [1, 1, 1, 0, 0, 0]
    # NLI, balanced accuracy: TPR 2/3, TNR 3/3
    for i, (g, p) in enumerate(zip(gold, [1, 1, 0, 0, 0, 0])):
        rows.append((nli(f"LLMAggreFact/AggreFact-CNN/test/{i}", doc=f"nli document {i}", claim=f"nli claim {i}",
                         label=g, source="LLMAggreFact/AggreFact-CNN"), p))
    # Summarization, balanced accuracy: TPR 1/3, TNR 2/3
    for i, (g, p) in enumerate(zip(gold, [1, 0, 0, 0, 0, 1])):
        rows.append((summ(f"LLMAggreFact/TofuEval-MediaS/test/{i}", doc=f"summary document {i}",
                          summary=f"summary {i}", label=g, source="LLMAggreFact/TofuEval-MediaS"), p))
    # QA, accuracy: 5 of 6 correct
    for i, (g, p) in enumerate(zip(gold, [1, 1, 1, 0, 0, 1])):
        rows.append((qa(f"HaluEval QA/test/{i}", doc=f"qa passage {i}", q=f"question {i}?", a=f"answer {i}",
                        label=g, source="HaluEval QA"), p))
    # Dialogue, accuracy: 4 of 6 correct
    dgold = [1, 0, 1, 0, 1, 0]
    for i, (g, p) in enumerate(zip(dgold, [1, 0, 0, 1, 1, 0])):
        rows.append((dialog(f"HalluDial/train/{i}", doc=f"dialogue knowledge {i}",
                            turns=(f"hello {i}", f"hi {i}", f"ask {i}", f"reply {i}"),
                            label=g, source="HalluDial"), p))
    return rows


def example_strategy():
    """Hypothesis strategy for valid Examples of every task format."""
    from hypothesis import strategies as st

    text = st.text(min_size=1, max_size=40).filter(lambda s: s.strip() != "")
    label = st.one_of(st.none(), st.sampled_from([0, 1]))
    lang = st.sampled_from(list(Language))
    meta = st.one_of(st.none(), st.dictionaries(st.text(max_size=5), st.integers(), max_size=3))

    def build(task, doc, turns, lab, lng, rationale, meta, eid):
        if task is TaskFormat.QA:
            conv = (Turn.user(turns[0]), Turn.assistant(turns[1]))
        elif task is TaskFormat.DIALOGUE:
            n = 2 * max(1, len(turns) // 2)
            conv = tuple(Turn.user(t) if i % 2 == 0 else Turn.assistant(t) for i, t in enumerate(turns[:n]))
        else:
            conv = (Turn.assistant(turns[0]),)
        return Example(eid, task, doc, conv, lab, language=lng, source="hyp", rationale=rationale, meta=meta)

    return st.builds(
        build,
        st.sampled_from(list(TaskFormat)),
        text,
        st.lists(text, min_size=2, max_size=6),
        label,
        lang,
        st.one_of(st.none(), st.text(max_size=20)),
        meta,
        text,
    )
