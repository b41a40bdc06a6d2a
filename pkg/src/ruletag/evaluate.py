"""Tagging metrics: word accuracy, per-tag and macro F1, BIO span F1,
and confusion matrices with CSV/text rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Tagset
from .errors import SchemaError, ShapeError


def word_accuracy(gold: Sequence[str], pred: Sequence[str]) -> float:
    """Fraction of positions where the prediction matches gold."""
    if len(gold) != len(pred):
        raise ShapeError(f"gold has {len(gold)} tags, pred has {len(pred)}")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def confusion_matrix(
    gold: Sequence[str], pred: Sequence[str], tagset: Tagset
) -> np.ndarray:
    """Counts indexed (gold tag, predicted tag)."""
    if len(gold) != len(pred):
        raise ShapeError(f"gold has {len(gold)} tags, pred has {len(pred)}")
    matrix = np.zeros((len(tagset), len(tagset)), dtype=np.int64)
    for g, p in zip(gold, pred):
        matrix[tagset.index(g), tagset.index(p)] += 1
    return matrix


@dataclass
class TagReport:
    """Per-tag precision/recall/F1 plus corpus-level summaries."""

    tags: list[str]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    macro_f1: float
    word_accuracy: float
    confusion: np.ndarray

    def as_dict(self) -> dict:
        return {
            "tags": self.tags,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "macro_f1": self.macro_f1,
            "word_accuracy": self.word_accuracy,
            "confusion": self.confusion.tolist(),
        }

    def render_text(self) -> str:
        width = max((len(t) for t in self.tags), default=4)
        lines = [f"{'tag':<{width}}  {'prec':>6}  {'rec':>6}  {'f1':>6}  {'support':>7}"]
        for tag in self.tags:
            lines.append(
                f"{tag:<{width}}  {self.precision[tag]:>6.3f}  {self.recall[tag]:>6.3f}"
                f"  {self.f1[tag]:>6.3f}  {self.support[tag]:>7d}"
            )
        lines.append("")
        lines.append(f"macro F1       {self.macro_f1:.4f}")
        lines.append(f"word accuracy  {self.word_accuracy:.4f}")
        return "\n".join(lines) + "\n"


def macro_f1(
    gold: Sequence[str],
    pred: Sequence[str],
    tagset: Tagset,
    macro_over: Iterable[str] | None = None,
) -> TagReport:
    """Unweighted mean of per-tag F1 over the tag inventory.

    A tag that occurs in neither gold nor predictions is left out of
    the mean; one that is predicted but never gold scores 0.  Precision
    and recall are 0 whenever their denominator is.  ``macro_over``
    restricts the mean to a subset of tags (e.g. excluding a
    low-confidence marker) without dropping them from the confusion.
    """
    for tag in list(gold) + list(pred):
        if tag not in tagset:
            raise SchemaError(f"tag {tag!r} not in tagset {list(tagset)}")
    eligible = set(tagset) if macro_over is None else set(macro_over)
    confusion = confusion_matrix(gold, pred, tagset)
    gold_counts = confusion.sum(axis=1)
    pred_counts = confusion.sum(axis=0)
    correct = np.diag(confusion)

    precision: dict[str, float] = {}
    recall: dict[str, float] = {}
    f1: dict[str, float] = {}
    support: dict[str, int] = {}
    macro_terms = []
    for i, tag in enumerate(tagset):
        p = correct[i] / pred_counts[i] if pred_counts[i] else 0.0
        r = correct[i] / gold_counts[i] if gold_counts[i] else 0.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        precision[tag], recall[tag], f1[tag] = float(p), float(r), float(f)
        support[tag] = int(gold_counts[i])
        if tag in eligible and (gold_counts[i] or pred_counts[i]):
            macro_terms.append(f)
    macro = float(np.mean(macro_terms)) if macro_terms else 0.0
    accuracy = float(correct.sum() / confusion.sum()) if confusion.sum() else 0.0
    return TagReport(
        tags=list(tagset),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_f1=macro,
        word_accuracy=accuracy,
        confusion=confusion,
    )


# -- BIO span metrics ------------------------------------------------------------


def bio_spans(tags: Sequence[str]) -> set[tuple[int, int, str]]:
    """Decode BIO tags into (start, end, type) spans, end inclusive.

    Lenient decoding: an I-x with no open span of type x starts a new
    span.  Raises SchemaError on tags that are not O, B-x or I-x.
    """
    spans: set[tuple[int, int, str]] = set()
    start = None
    current = None

    def close(end_index: int) -> None:
        nonlocal start, current
        if start is not None:
            spans.add((start, end_index, current))
        start, current = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i - 1)
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise SchemaError(f"malformed BIO tag at position {i}: {tag!r}")
        prefix, kind = tag[0], tag[2:]
        if prefix == "B" or current != kind:
            close(i - 1)
            start, current = i, kind
    close(len(tags) - 1)
    return spans


@dataclass
class SpanScore:
    correct: int = 0
    predicted: int = 0
    gold: int = 0

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "correct": self.correct,
            "predicted": self.predicted,
            "gold": self.gold,
        }


@dataclass
class SpanReport:
    """Exact-match span scores, per entity type and micro-averaged."""

    per_type: dict[str, SpanScore]
    micro: SpanScore

    def as_dict(self) -> dict:
        return {
            "per_type": {t: s.as_dict() for t, s in sorted(self.per_type.items())},
            "micro": self.micro.as_dict(),
        }

    def render_text(self) -> str:
        types = sorted(self.per_type)
        width = max([len(t) for t in types] + [5])
        lines = [f"{'type':<{width}}  {'prec':>6}  {'rec':>6}  {'f1':>6}  {'gold':>5}"]
        for t in types:
            s = self.per_type[t]
            lines.append(
                f"{t:<{width}}  {s.precision:>6.3f}  {s.recall:>6.3f}  {s.f1:>6.3f}  {s.gold:>5d}"
            )
        lines.append("")
        m = self.micro
        lines.append(
            f"micro: precision {m.precision:.4f}  recall {m.recall:.4f}  f1 {m.f1:.4f}"
        )
        return "\n".join(lines) + "\n"


def span_f1(
    gold: Sequence[Sequence[str]],
    pred: Sequence[Sequence[str]],
    types: Iterable[str] | None = None,
) -> SpanReport:
    """Span-level F1 over per-sentence BIO sequences.

    A span counts as correct only when its type and both boundaries
    match exactly.
    """
    if len(gold) != len(pred):
        raise ShapeError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    allowed = set(types) if types is not None else None
    per_type: dict[str, SpanScore] = {}
    micro = SpanScore()
    for gold_tags, pred_tags in zip(gold, pred):
        if len(gold_tags) != len(pred_tags):
            raise ShapeError(
                f"sentence length mismatch: {len(gold_tags)} vs {len(pred_tags)}"
            )
        gold_set = bio_spans(gold_tags)
        pred_set = bio_spans(pred_tags)
        for _, _, kind in gold_set | pred_set:
            if allowed is not None and kind not in allowed:
                raise SchemaError(f"entity type {kind!r} not in {sorted(allowed)}")
            per_type.setdefault(kind, SpanScore())
        for span in gold_set:
            per_type[span[2]].gold += 1
            micro.gold += 1
        for span in pred_set:
            per_type[span[2]].predicted += 1
            micro.predicted += 1
            if span in gold_set:
                per_type[span[2]].correct += 1
                micro.correct += 1
    if allowed is not None:
        for kind in allowed:
            per_type.setdefault(kind, SpanScore())
    return SpanReport(per_type=per_type, micro=micro)


# -- rendering helpers --------------------------------------------------------------


def confusion_to_csv(confusion: np.ndarray, tagset: Tagset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("gold\\pred," + ",".join(tagset) + "\n")
        for i, tag in enumerate(tagset):
            handle.write(tag + "," + ",".join(str(int(c)) for c in confusion[i]) + "\n")


def confusion_to_text(confusion: np.ndarray, tagset: Tagset) -> str:
    """Counts grid with a shade mark per cell so the diagonal stands out."""
    shades = " .:*#"
    width = max(max(len(t) for t in tagset), len(str(int(confusion.max(initial=0)))) + 1)
    header = " " * (width + 1) + " ".join(f"{t:>{width}}" for t in tagset)
    lines = [header]
    row_max = confusion.max(axis=1)
    for i, tag in enumerate(tagset):
        cells = []
        for j in range(len(tagset)):
            count = int(confusion[i, j])
            level = 0
            if row_max[i] > 0 and count > 0:
                level = 1 + int(3 * count / row_max[i])
            cells.append(f"{count:>{width - 1}d}{shades[min(level, 4)]}")
        lines.append(f"{tag:>{width}} " + " ".join(cells))
    return "\n".join(lines) + "\n"


def save_report_json(report, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(report.as_dict(), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def mean_stdev(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and stdev (0 for a single value), for per-seed tables."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    stdev = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, stdev
