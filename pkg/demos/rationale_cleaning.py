"""Attach rationales to labeled examples and drop the ones a teacher contradicts."""

import json

from groundcheck.llm import ChatClient
from groundcheck.rationale import rationalize_dataset
from groundcheck.schema import Example, TaskFormat, Turn

doc = "The bridge is 1.2 km long and opened to traffic in 1998."
examples = [
    Example("r/0", TaskFormat.NLI, doc, (Turn.assistant("The bridge opened in 1998."),), 1),
    Example("r/1", TaskFormat.NLI, doc, (Turn.assistant("The bridge is 2 km long."),), 0),
    # mislabeled on purpose: the teacher disagrees every time, so it is dropped
    Example("r/2", TaskFormat.NLI, doc, (Turn.assistant("The bridge is 1.2 km long."),), 0),
]

# Three samples per example, answered in order.
answers = [
    (1, "The opening year matches."), (1, "Stated directly."), (1, "1998 is given."),
    (1, "Length unclear to me."), (0, "Document says 1.2 km, not 2 km."), (0, "Wrong length."),
    (1, "Length matches."), (1, "1.2 km is stated."), (1, "Correct."),
]
client = ChatClient.mock(script=[{"respond": json.dumps({"rationale": r, "output": o})} for o, r in answers])

result = rationalize_dataset(examples, client, k=3)
for e in result.retained:
    print(f"kept    {e.id} label={e.label}: {e.rationale}")
for entry in result.report:
    print(f"dropped {entry.id} gold={entry.gold} samples={entry.predicted_labels}")
