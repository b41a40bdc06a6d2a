"""Automatic annotation: tag a raw corpus with a trained model and emit
a silver-standard JSONL dataset.

Decoding is greedy per-token argmax (ties go to the lowest tag index).
Tokens whose best probability falls below the confidence threshold are
tagged OTHER, which is a quality marker for downstream filtering, never
a model output class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    OTHER_TAG,
    Sentence,
    TaggedSentence,
    read_plain_text,
    tag_histogram,
    write_jsonl,
)
from .embeddings import EmbeddingTable
from .errors import ConfigError, EmptyInput
from .model import Tagger
from .rules import RuleSet, coverage_report


@dataclass
class SilverConfig:
    """Settings for a silver-generation run.

    A threshold of 0 disables the OTHER marker entirely; 1 marks every
    token whose probability is not exactly 1.
    """

    confidence_threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ConfigError(
                f"confidence_threshold {self.confidence_threshold} outside [0, 1]"
            )


def tag_sentence(
    tagger: Tagger,
    sentence: Sentence,
    embeddings: EmbeddingTable,
    confidence_threshold: float = 0.5,
) -> TaggedSentence:
    """Tag one sentence; low-confidence tokens become OTHER."""
    if len(sentence.tokens) == 0:
        raise EmptyInput("cannot tag an empty sentence")
    SilverConfig(confidence_threshold)  # range check
    dists = tagger.forward(sentence, embeddings, train_mode=False)
    tags = []
    for dist in dists:
        if dist.max_prob() < confidence_threshold:
            tags.append(OTHER_TAG)
        else:
            tags.append(tagger.tagset.tag(dist.argmax()))
    return TaggedSentence(sentence=sentence, tags=tuple(tags))


def tag_sentences(
    tagger: Tagger,
    sentences: Sequence[Sentence],
    embeddings: EmbeddingTable,
    confidence_threshold: float = 0.5,
    batch_size: int = 256,
) -> list[TaggedSentence]:
    """Tag many sentences, batched for throughput, order preserved."""
    SilverConfig(confidence_threshold)
    tagged: list[TaggedSentence] = []
    for start in range(0, len(sentences), batch_size):
        batch = list(sentences[start : start + batch_size])
        out = tagger.forward_graph(batch, embeddings, train_mode=False)
        probs = out.probs.value
        for j, sentence in enumerate(batch):
            rows = probs[out.offsets[j] : out.offsets[j + 1]]
            tags = []
            for row in rows:
                if row.max() < confidence_threshold:
                    tags.append(OTHER_TAG)
                else:
                    tags.append(tagger.tagset.tag(int(np.argmax(row))))
            tagged.append(TaggedSentence(sentence=sentence, tags=tuple(tags)))
    return tagged


def generate_silver(
    config: SilverConfig,
    tagger: Tagger,
    embeddings: EmbeddingTable,
    input_path: str | Path,
    output_path: str | Path,
    rules: RuleSet | None = None,
) -> dict:
    """Tag a plain-text corpus and write JSONL plus a summary.

    Returns the summary dict: sentence/token counts, tag histogram,
    OTHER fraction, and rule coverage when a rule set is given.
    """
    sentences = read_plain_text(input_path)
    if not sentences:
        raise EmptyInput(f"no sentences in {input_path}")
    tagged = tag_sentences(
        tagger, sentences, embeddings, confidence_threshold=config.confidence_threshold
    )
    write_jsonl(tagged, output_path)
    return summarize(tagged, rules=rules, threshold=config.confidence_threshold)


def summarize(
    tagged: Iterable[TaggedSentence],
    rules: RuleSet | None = None,
    threshold: float | None = None,
) -> dict:
    tagged = list(tagged)
    histogram = tag_histogram(tagged)
    total = sum(histogram.values())
    summary = {
        "sentences": len(tagged),
        "tokens": total,
        "tag_histogram": dict(sorted(histogram.items())),
        "other_fraction": (histogram.get(OTHER_TAG, 0) / total) if total else 0.0,
    }
    if threshold is not None:
        summary["confidence_threshold"] = threshold
    if rules is not None:
        summary["rule_coverage"] = coverage_report(rules, tagged).as_dict()
    return summary


def write_summary(summary: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(summary, handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")
