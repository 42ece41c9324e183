"""Judge a small mixed bench with a scripted backend and print the results table.

The mock judge answers from a lookup on the claim text, so no endpoint is
needed. Swap ``ChatClient.mock(...)`` for ``ChatClient(BackendProfile(...))``
to run the same code against a real chat-completions server.
"""

import json

from groundcheck.judge import judge_many
from groundcheck.llm import ChatClient
from groundcheck.metrics import build_report, render_table
from groundcheck.schema import Example, TaskFormat, Turn

facts = "Ada Lovelace was born in London in 1815 and worked with Charles Babbage on the Analytical Engine."

bench = []
for i, (claim, gold) in enumerate([
    ("Lovelace was born in 1815.", 1),
    ("Lovelace was born in Paris.", 0),
    ("She worked with Babbage.", 1),
    ("She built the engine alone.", 0),
]):
    source = "LLMAggreFact/Bio" if i < 2 else "LLMAggreFact/History"
    bench.append(Example(f"nli/{i}", TaskFormat.NLI, facts, (Turn.assistant(claim),), gold, source=source))
for i, (answer, gold) in enumerate([("1815", 1), ("1852", 0), ("London", 1), ("Manchester", 0)]):
    q = "When was she born?" if i < 2 else "Where was she born?"
    bench.append(Example(f"qa/{i}", TaskFormat.QA, facts, (Turn.user(q), Turn.assistant(answer)), gold, source="Bio QA"))

# The scripted judge knows which statements are false but is fooled by "1852".
false_statements = ("Paris", "alone", "Manchester")


def judge(messages):
    prompt = messages[0]["content"]
    assessed = prompt.split("# Claim:\n", 1)[-1].split("# Answer:\n", 1)[-1].split("\n\n", 1)[0]
    supported = not any(word in assessed for word in false_statements)
    return json.dumps({"rationale": "compared with the document", "output": int(supported)})


client = ChatClient.mock(responder=judge, model_id="scripted-judge")
verdicts = judge_many(bench, client, jobs=4)
for v in verdicts:
    print(f"{v.id:8s} predicted={v.label} ({v.parse_mode})")

report = build_report(verdicts, bench, metadata={"model": client.profile.model_id})
print()
print(render_table(report))
print(json.dumps(report.averages, indent=2))
