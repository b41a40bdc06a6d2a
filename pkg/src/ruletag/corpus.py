"""Tokenization, tagset management, and corpus file formats.

The corpus exchange format is JSONL: one object per line with keys
``text`` (the original untokenized sentence), ``tokens`` and ``tags``
(parallel lists of strings).  Unlabeled corpora are plain text, one
sentence per line.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyInput, IoError, ParseError, SchemaError

# Default POS tag inventory.  OTHER is reserved for low-confidence tokens
# in silver output and is never a model output class.
DEFAULT_POS_TAGS = ("PRON", "NOUN", "VERB", "ADJ", "AUX", "PART", "DET", "PUNCT")
OTHER_TAG = "OTHER"


class Tagset:
    """Ordered, immutable collection of tag names.

    The ordering is fixed and defines the index <-> tag mapping used by
    every model head and transition matrix.
    """

    def __init__(self, tags: Iterable[str]):
        tags = tuple(tags)
        if len(tags) < 2:
            raise SchemaError(f"a tagset needs at least 2 tags, got {len(tags)}")
        seen = set()
        for t in tags:
            if not t:
                raise SchemaError("empty tag name in tagset")
            if t in seen:
                raise SchemaError(f"duplicate tag name: {t!r}")
            seen.add(t)
        self._tags = tags
        self._index = {t: i for i, t in enumerate(tags)}

    @classmethod
    def default_pos(cls) -> "Tagset":
        return cls(DEFAULT_POS_TAGS)

    @property
    def tags(self) -> tuple[str, ...]:
        return self._tags

    def __len__(self) -> int:
        return len(self._tags)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tags)

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Tagset) and self._tags == other._tags

    def __repr__(self) -> str:
        return f"Tagset({list(self._tags)!r})"

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise KeyError(f"unknown tag: {tag!r}") from None

    def tag(self, index: int) -> str:
        return self._tags[index]


def _is_word_char(ch: str) -> bool:
    # Letters, combining marks and numbers count as word characters, so
    # diacritics and special letters stay inside word tokens.
    return unicodedata.category(ch)[0] in ("L", "M", "N")


def tokenize_wordpunct(text: str) -> list[str]:
    """Split text into maximal alphanumeric runs and punctuation runs.

    Whitespace separates runs and never appears inside a token.

    Raises:
        EmptyInput: if ``text`` is empty or whitespace-only.
    """
    if not text.strip():
        raise EmptyInput("cannot tokenize empty or whitespace-only text")
    tokens: list[str] = []
    run: list[str] = []
    run_is_word = False
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run = []
            continue
        is_word = _is_word_char(ch)
        if run and is_word != run_is_word:
            tokens.append("".join(run))
            run = []
        run.append(ch)
        run_is_word = is_word
    if run:
        tokens.append("".join(run))
    return tokens


@dataclass(frozen=True)
class Sentence:
    """A raw sentence and its tokens.

    When built from raw text the tokens are the wordpunct tokenization
    of that text; when read from a corpus file they are taken as given.
    """

    text: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, text: str) -> "Sentence":
        return cls(text=text, tokens=tuple(tokenize_wordpunct(text)))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TaggedSentence:
    """A sentence with one tag per token."""

    sentence: Sentence
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tags) != len(self.sentence.tokens):
            raise SchemaError(
                f"{len(self.sentence.tokens)} tokens but {len(self.tags)} tags "
                f"in sentence {self.sentence.text!r}"
            )

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.sentence.tokens

    @property
    def text(self) -> str:
        return self.sentence.text

    def __len__(self) -> int:
        return len(self.tags)


SPLIT_NAMES = ("unlabeled-train", "rule-dev", "gold-train", "gold-test")


@dataclass
class CorpusSplit:
    """A named corpus partition."""

    name: str
    sentences: list = field(default_factory=list)

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise SchemaError(f"unknown split name {self.name!r}; expected one of {SPLIT_NAMES}")


def check_splits_disjoint(splits: Iterable[CorpusSplit]) -> None:
    """Verify that no sentence text appears in more than one split."""
    seen: dict[str, str] = {}
    for split in splits:
        for sent in split.sentences:
            text = sent.text if isinstance(sent, (Sentence, TaggedSentence)) else str(sent)
            if text in seen and seen[text] != split.name:
                raise SchemaError(
                    f"sentence appears in both {seen[text]!r} and {split.name!r}: {text!r}"
                )
            seen.setdefault(text, split.name)


def read_jsonl(path: str | Path) -> list[TaggedSentence]:
    """Read a JSONL corpus of {text, tokens, tags} records.

    Raises:
        ParseError: on a malformed JSON line (carries the line number).
        SchemaError: on missing keys or token/tag length mismatch.
        IoError: when the file cannot be read.
    """
    sentences: list[TaggedSentence] = []
    try:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
                sentences.append(_record_to_sentence(record, lineno))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return sentences


def _record_to_sentence(record: object, lineno: int) -> TaggedSentence:
    if not isinstance(record, dict):
        raise SchemaError(f"line {lineno}: expected a JSON object, got {type(record).__name__}")
    for key in ("text", "tokens", "tags"):
        if key not in record:
            raise SchemaError(f"line {lineno}: missing key {key!r}")
    text = record["text"]
    tokens = record["tokens"]
    tags = record["tags"]
    if not isinstance(text, str) or not isinstance(tokens, list) or not isinstance(tags, list):
        raise SchemaError(f"line {lineno}: text must be a string, tokens and tags lists")
    if len(tokens) != len(tags):
        raise SchemaError(
            f"line {lineno}: {len(tokens)} tokens but {len(tags)} tags"
        )
    return TaggedSentence(
        sentence=Sentence(text=text, tokens=tuple(str(t) for t in tokens)),
        tags=tuple(str(t) for t in tags),
    )


def write_jsonl(sentences: Iterable[TaggedSentence], path: str | Path) -> None:
    """Write sentences as compact UTF-8 JSONL, key order text/tokens/tags.

    Round trips losslessly through :func:`read_jsonl`.
    """
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for sent in sentences:
                record = {
                    "text": sent.text,
                    "tokens": list(sent.tokens),
                    "tags": list(sent.tags),
                }
                handle.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
                handle.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_plain_text(path: str | Path) -> list[Sentence]:
    """Read an unlabeled corpus: one sentence per line, blank lines skipped."""
    sentences = []
    try:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    sentences.append(Sentence.from_text(line))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return sentences


def tag_histogram(corpus: Iterable[TaggedSentence]) -> Counter:
    """Count tag occurrences over a corpus; totals equal the token count."""
    counts: Counter = Counter()
    for sent in corpus:
        counts.update(sent.tags)
    return counts
