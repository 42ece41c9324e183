"""Print the classifier and chat judge prompts for one example of each task format."""

from groundcheck.prompts import render_classifier, render_generative
from groundcheck.schema import Example, TaskFormat, Turn

DOC = "The museum opens at 10 am and closes at 6 pm, except on Mondays when it is closed."

examples = [
    Example("demo/nli", TaskFormat.NLI, DOC, (Turn.assistant("The museum is closed on Mondays."),), 1),
    Example("demo/qa", TaskFormat.QA, DOC, (Turn.user("When does it close?"), Turn.assistant("At 8 pm.")), 0),
    Example(
        "demo/dialogue",
        TaskFormat.DIALOGUE,
        DOC,
        (Turn.user("Hi! Is it open today?"), Turn.assistant("Which day is it?"),
         Turn.user("Monday."), Turn.assistant("Then it is closed, sorry.")),
        1,
    ),
    Example("demo/summary", TaskFormat.SUMMARIZATION, DOC, (Turn.assistant("Open daily 10 to 6."),), 0),
]

for e in examples:
    flat = render_classifier(e)
    chat = render_generative(e)
    print(f"=== {e.task.value}: classifier input ({flat.template_id} @ {flat.template_version})")
    print(flat.flat_text)
    print(f"\n=== {e.task.value}: chat judge prompt ({chat.template_id} @ {chat.template_version})")
    print(chat.messages[0]["content"])
