"""Grow a QA seed set: hallucinated answers, a dialogue rewrite and a Spanish copy.

The backend here is a scripted stand-in that returns fixed generations; a
real run points the same calls at a generation model.
"""

import json

from groundcheck.llm import ChatClient
from groundcheck.prompts import ERROR_TYPE_DEFINITIONS
from groundcheck.schema import Example, TaskFormat, Turn
from groundcheck.synthesis import plan_jobs, qa_to_dialogue, run_jobs, translate

seed = Example(
    "seed/0",
    TaskFormat.QA,
    "The Nile flows north through eleven countries and empties into the Mediterranean Sea.",
    (Turn.user("Where does the Nile end?"), Turn.assistant("In the Mediterranean Sea.")),
    1,
    source="demo",
)

rewrites = {
    "entity": "In the Red Sea.",
    "relation": "It starts in the Mediterranean Sea.",
    "sentence": "The Nile does not reach any sea.",
    "invented": "In the Mediterranean Sea, after passing through a large underground lake.",
    "subjective": "In the Mediterranean, the most beautiful sea in the world.",
    "unverifiable": "In the Mediterranean Sea, where it deposits 90 million tonnes of silt a year.",
}


def generator(messages):
    prompt = messages[0]["content"]
    for etype, definition in ERROR_TYPE_DEFINITIONS.items():
        if definition in prompt:
            return rewrites[etype.value]
    return "In the Mediterranean Sea."


jobs = plan_jobs([seed], "hallucinate", variants=6)
negatives, failures = run_jobs(jobs, ChatClient.mock(responder=generator))
for e in negatives:
    print(f"{e.hallucination_type.value:13s} label={e.label}  {e.assessed}")
print(f"failed jobs: {len(failures)}")

dialogue = json.dumps([
    {"role": "user", "content": "I'm reading about African rivers."},
    {"role": "assistant", "content": "Great topic! Which river interests you?"},
    {"role": "user", "content": "Where does the Nile end?"},
    {"role": "assistant", "content": "In the Mediterranean Sea."},
])
d = qa_to_dialogue(seed, ChatClient.mock(script=[{"respond": dialogue}]))
print(f"\n{d.id}: {len(d.conversation)} turns, label {d.label}")

spanish = json.dumps({
    "document": "El Nilo fluye hacia el norte a través de once países y desemboca en el mar Mediterráneo.",
    "turns": ["¿Dónde termina el Nilo?", "En el mar Mediterráneo."],
}, ensure_ascii=False)
es = translate(seed, "es", ChatClient.mock(script=[{"respond": spanish}]))
print(f"{es.id}: {es.conversation[0].content} / {es.assessed}")
