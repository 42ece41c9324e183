"""Scoring verdicts against gold labels.

The positive class is label 1 (supported). LLMAggreFact sub-datasets are
scored with balanced accuracy, everything else with accuracy. A source named
``"Parent/Sub"`` is scored per sub-dataset and the parent column is the
unweighted mean of its subs. Averages are unweighted means over columns.
Failed verdicts are left out of ``n`` and counted in ``failed_count``.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .schema import Example


class Metric(str, Enum):
    ACCURACY = "accuracy"
    BALANCED_ACCURACY = "balanced_accuracy"


class MetricError(ValueError):
    pass


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


def confusion(pairs: Iterable[tuple[int, int]]) -> ConfusionCounts:
    """Tally ``(gold, predicted)`` pairs."""
    tp = fp = tn = fn = 0
    for gold, pred in pairs:
        if gold not in (0, 1) or pred not in (0, 1):
            raise MetricError(f"labels must be binary, got ({gold!r}, {pred!r})")
        if gold == 1:
            if pred == 1:
                tp += 1
            else:
                fn += 1
        elif pred == 1:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise MetricError("accuracy of an empty set is undefined")
    return (c.tp + c.tn) / c.total


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of true-positive and true-negative rates."""
    pos = c.tp + c.fn
    neg = c.tn + c.fp
    if pos == 0 or neg == 0:
        missing = "positive" if pos == 0 else "negative"
        raise MetricError(
            f"balanced accuracy needs both classes; no {missing} gold labels (use accuracy)"
        )
    return (c.tp / pos + c.tn / neg) / 2


def score(metric: Metric | str, c: ConfusionCounts) -> float:
    if Metric(metric) is Metric.BALANCED_ACCURACY:
        return balanced_accuracy(c)
    return accuracy(c)


BALANCED_PARENTS = frozenset({"LLMAggreFact"})


def default_metric(dataset: str) -> Metric:
    parent = dataset.split("/", 1)[0]
    return Metric.BALANCED_ACCURACY if parent in BALANCED_PARENTS else Metric.ACCURACY


@dataclass(frozen=True)
class DatasetScore:
    dataset: str
    group: str
    metric: Metric
    value: float
    n: int
    failed_count: int
    parent: str | None = None
    components: tuple[str, ...] = ()
    counts: ConfusionCounts | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "dataset": self.dataset,
            "group": self.group,
            "metric_name": self.metric.value,
            "value": self.value,
            "n": self.n,
            "failed_count": self.failed_count,
        }
        if self.parent is not None:
            d["parent"] = self.parent
        if self.components:
            d["components"] = list(self.components)
        if self.counts is not None:
            d["counts"] = {"tp": self.counts.tp, "fp": self.counts.fp, "tn": self.counts.tn, "fn": self.counts.fn}
        return d


GROUP_ORDER = ("nli", "summarization", "qa", "dialogue")
GROUP_TITLES = {"nli": "NLI", "summarization": "Summarization", "qa": "QA", "dialogue": "Dialog"}


@dataclass
class MetricsReport:
    per_dataset: dict[str, DatasetScore]
    columns: list[str]
    averages: dict[str, float]
    metadata: dict[str, Any] = field(default_factory=dict)

    def column_scores(self) -> list[DatasetScore]:
        return [self.per_dataset[c] for c in self.columns]

    def to_dict(self) -> dict[str, Any]:
        return {
            "metadata": self.metadata,
            "columns": list(self.columns),
            "per_dataset": {k: v.to_dict() for k, v in self.per_dataset.items()},
            "averages": dict(self.averages),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=False)


def _verdict_map(verdicts: Any) -> dict[str, int | None]:
    if isinstance(verdicts, Mapping):
        return dict(verdicts)
    out: dict[str, int | None] = {}
    for v in verdicts:
        out[v.id] = v.label
    return out


def build_report(
    verdicts: Mapping[str, int | None] | Iterable[Any],
    examples: Sequence[Example],
    grouping: Mapping[str, Metric | str] | None = None,
    metadata: Mapping[str, Any] | None = None,
) -> MetricsReport:
    """Per-dataset scores, parent roll-ups and unweighted averages.

    ``verdicts`` maps example id to predicted label, ``None`` marking a failed
    judgement; objects with ``id``/``label`` attributes are accepted too.
    Examples without any verdict count as failed. ``grouping`` overrides the
    metric for a dataset or a parent name.
    """
    grouping = dict(grouping or {})
    predicted = _verdict_map(verdicts)
    gold = {e.id: e for e in examples}
    for vid in predicted:
        if vid not in gold:
            raise ReportError(f"verdict id {vid!r} has no gold example")

    by_dataset: "OrderedDict[str, list[Example]]" = OrderedDict()
    for e in examples:
        if e.label is None:
            raise ReportError(f"example {e.id!r} has no gold label")
        by_dataset.setdefault(e.source, []).append(e)

    rows: dict[str, DatasetScore] = {}
    children: "OrderedDict[str, list[str]]" = OrderedDict()
    order: list[str] = []
    for dataset, exs in by_dataset.items():
        parent = dataset.split("/", 1)[0] if "/" in dataset else None
        metric = Metric(grouping.get(dataset) or (parent and grouping.get(parent)) or default_metric(dataset))
        pairs = [(e.label, predicted[e.id]) for e in exs if predicted.get(e.id) is not None]
        failed = len(exs) - len(pairs)
        if not pairs:
            raise ReportError(f"dataset {dataset!r} has no scored examples ({failed} failed)")
        counts = confusion(pairs)
        try:
            value = score(metric, counts)
        except MetricError as exc:
            raise ReportError(f"dataset {dataset!r}: {exc}") from exc
        tasks = {e.task.value for e in exs}
        group = tasks.pop() if len(tasks) == 1 else "mixed"
        rows[dataset] = DatasetScore(dataset, group, metric, value, len(pairs), failed, parent, (), counts)
        if parent is None:
            order.append(dataset)
        else:
            if parent not in children:
                order.append(parent)
            children.setdefault(parent, []).append(dataset)

    for parent, subs in children.items():
        if parent in rows:
            raise ReportError(f"{parent!r} is used both as a dataset and as a parent of sub-datasets")
        sub_rows = [rows[s] for s in subs]
        metrics = {r.metric for r in sub_rows}
        rows[parent] = DatasetScore(
            dataset=parent,
            # a parent column sits in the format group of its first sub-dataset
            group=sub_rows[0].group,
            metric=metrics.pop() if len(metrics) == 1 else Metric.ACCURACY,
            value=sum(r.value for r in sub_rows) / len(sub_rows),
            n=sum(r.n for r in sub_rows),
            failed_count=sum(r.failed_count for r in sub_rows),
            components=tuple(subs),
        )

    rank = {g: i for i, g in enumerate(GROUP_ORDER)}
    columns = sorted(order, key=lambda d: rank.get(rows[d].group, len(rank)))

    averages: dict[str, float] = {}
    for g in sorted({rows[c].group for c in columns}, key=lambda g: rank.get(g, len(rank))):
        vals = [rows[c].value for c in columns if rows[c].group == g]
        averages[g] = sum(vals) / len(vals)
    if columns:
        averages["overall"] = sum(rows[c].value for c in columns) / len(columns)

    meta = {"averaging": "unweighted mean over datasets", "failed_verdicts": "excluded"}
    meta.update(metadata or {})
    return MetricsReport(per_dataset=rows, columns=columns, averages=averages, metadata=meta)


def _pct(x: float) -> str:
    return f"{100 * x:.1f}"


def render_table(reports: MetricsReport | Sequence[MetricsReport], model_key: str = "model") -> str:
    """Fixed-width table: one row per model, a column per dataset grouped by format, then Average."""
    if isinstance(reports, MetricsReport):
        reports = [reports]
    if not reports:
        return ""
    columns = reports[0].columns
    groups = [reports[0].per_dataset[c].group for c in columns]

    names = [str(r.metadata.get(model_key, "model")) for r in reports]
    w0 = max(len("Model"), *(len(n) for n in names))
    widths = [max(len(c), 5) for c in columns]

    group_cells = []
    i = 0
    while i < len(columns):
        j = i
        while j < len(columns) and groups[j] == groups[i]:
            j += 1
        span = sum(widths[i:j]) + 3 * (j - i - 1)
        group_cells.append(GROUP_TITLES.get(groups[i], groups[i]).center(span))
        i = j

    lines = [
        " | ".join(["Model".ljust(w0), *group_cells, "Average"]),
        " | ".join(["".ljust(w0), *(c.center(w) for c, w in zip(columns, widths)), "       "]),
    ]
    lines.append("-" * len(lines[0]))
    for name, r in zip(names, reports):
        if r.columns != columns:
            raise ReportError("reports have different dataset columns")
        cells = [_pct(r.per_dataset[c].value).rjust(w) for c, w in zip(columns, widths)]
        lines.append(" | ".join([name.ljust(w0), *cells, _pct(r.averages["overall"]).rjust(7)]))
    return "\n".join(line.rstrip() for line in lines) + "\n"
