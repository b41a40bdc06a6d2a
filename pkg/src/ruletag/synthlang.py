"""Synthetic-language generator: a toy grammar with a known lexicon,
tag-characteristic suffixes and a first-order tag Markov chain.

Sampled corpora keep their hidden gold tags, and a matching rule system
with configurable Tier-1 coverage can be derived from the generator's
ground truth.  This provides a desk-scale test bed where rule-guided
training can be measured against a real answer key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Sentence, TaggedSentence, Tagset
from .errors import ConfigError
from .rules import MorphRule, RuleSet

DEFAULT_SYNTH_TAGS = ("NOUN", "VERB", "ADJ", "DET", "ADV", "PRT")

_CONSONANTS = "bdgklmnprstvz"
_VOWELS = "aeiou"
_STEM_LETTERS = "abdefgiklmnoprstuwz"

# lexicon / corpus / tier-1 sampling draw from distinct seed streams
_LEXICON_STREAM = 0
_CORPUS_STREAM = 1
_RULES_STREAM = 2


@dataclass
class GrammarSpec:
    """Parameters of a synthetic grammar.

    ``transitions`` is row-stochastic: entry (j, k) is the probability
    that tag k follows tag j.  ``initial`` is the start distribution.
    Both default to seeded random peaked rows.
    """

    tags: tuple[str, ...] = DEFAULT_SYNTH_TAGS
    vocab_per_tag: int = 100
    ambiguity: float = 0.1
    suffixes_per_tag: int = 1
    suffix_len: int = 2
    transitions: np.ndarray | None = None
    initial: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.ambiguity < 1.0):
            raise ConfigError(f"ambiguity {self.ambiguity} outside [0,1)")
        if self.vocab_per_tag < 1:
            raise ConfigError("vocab_per_tag must be >= 1")
        n = len(self.tags)
        if self.transitions is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 7]))
            self.transitions = rng.dirichlet(np.full(n, 0.4), size=n)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if self.transitions.shape != (n, n):
            raise ConfigError(f"transitions must be {n}x{n}, got {self.transitions.shape}")
        if not np.allclose(self.transitions.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("transition rows must sum to 1")
        if self.initial is None:
            self.initial = np.full(n, 1.0 / n)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.initial.shape != (n,) or not np.isclose(self.initial.sum(), 1.0, atol=1e-9):
            raise ConfigError("initial distribution must be length |T| and sum to 1")

    def to_dict(self) -> dict:
        return {
            "tags": list(self.tags),
            "vocab_per_tag": self.vocab_per_tag,
            "ambiguity": self.ambiguity,
            "suffixes_per_tag": self.suffixes_per_tag,
            "suffix_len": self.suffix_len,
            "transitions": self.transitions.tolist(),
            "initial": self.initial.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GrammarSpec":
        return cls(
            tags=tuple(data["tags"]),
            vocab_per_tag=int(data["vocab_per_tag"]),
            ambiguity=float(data["ambiguity"]),
            suffixes_per_tag=int(data["suffixes_per_tag"]),
            suffix_len=int(data["suffix_len"]),
            transitions=np.array(data["transitions"]),
            initial=np.array(data["initial"]),
            seed=int(data["seed"]),
        )


def _tag_suffixes(spec: GrammarSpec) -> dict[str, list[str]]:
    """Distinct same-length suffixes per tag.

    Same length plus distinctness means a word ending can match at most
    one suffix pattern, so Tier-3 lookups are unambiguous.
    """
    if spec.suffix_len == 1:
        combos = list(_CONSONANTS)
    else:
        repeats = (spec.suffix_len + 1) // 2
        combos = [((c + v) * repeats)[: spec.suffix_len] for c in _CONSONANTS for v in _VOWELS]
    needed = len(spec.tags) * spec.suffixes_per_tag
    if needed > len(combos):
        raise ConfigError(f"cannot build {needed} distinct suffixes")
    out = {}
    for i, tag in enumerate(spec.tags):
        start = i * spec.suffixes_per_tag
        out[tag] = combos[start : start + spec.suffixes_per_tag]
    return out


@dataclass
class Grammar:
    """A realized grammar: lexicon, suffix table, emission lists."""

    spec: GrammarSpec
    tagset: Tagset
    word_tags: dict[str, tuple[str, ...]]  # word -> its valid tags (1 or 2)
    suffixes: dict[str, list[str]]  # tag -> suffix strings
    emissions: dict[str, list[str]] = field(default_factory=dict)  # tag -> emittable words
    emission_weights: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, spec: GrammarSpec) -> "Grammar":
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _LEXICON_STREAM]))
        suffixes = _tag_suffixes(spec)
        word_tags: dict[str, tuple[str, ...]] = {}
        for tag in spec.tags:
            made = 0
            while made < spec.vocab_per_tag:
                stem_len = int(rng.integers(2, 6))
                stem = "".join(
                    _STEM_LETTERS[i] for i in rng.integers(0, len(_STEM_LETTERS), stem_len)
                )
                suffix = suffixes[tag][int(rng.integers(0, len(suffixes[tag])))]
                word = stem + suffix
                if word in word_tags:
                    continue
                word_tags[word] = (tag,)
                made += 1
        # promote a fraction of words to two tags
        words = sorted(word_tags)
        n_ambiguous = int(round(spec.ambiguity * len(words)))
        if n_ambiguous:
            chosen = rng.choice(len(words), size=n_ambiguous, replace=False)
            for index in sorted(chosen):
                word = words[index]
                first = word_tags[word][0]
                others = [t for t in spec.tags if t != first]
                second = others[int(rng.integers(0, len(others)))]
                word_tags[word] = (first, second)
        emissions: dict[str, list[str]] = {tag: [] for tag in spec.tags}
        for word in sorted(word_tags):
            for tag in word_tags[word]:
                emissions[tag].append(word)
        # Weight emission by 1/|tags| so every word type is equally
        # frequent corpus-wide whether or not it is ambiguous.
        weights: dict[str, np.ndarray] = {}
        for tag, pool in emissions.items():
            raw = np.array([1.0 / len(word_tags[w]) for w in pool])
            weights[tag] = raw / raw.sum()
        return cls(
            spec=spec,
            tagset=Tagset(spec.tags),
            word_tags=word_tags,
            suffixes=suffixes,
            emissions=emissions,
            emission_weights=weights,
        )

    @property
    def words(self) -> list[str]:
        return sorted(self.word_tags)

    def unambiguous_words(self) -> list[str]:
        return [w for w in self.words if len(self.word_tags[w]) == 1]


def sample_corpus(
    grammar: Grammar | GrammarSpec,
    n_sentences: int,
    len_range: tuple[int, int] = (4, 12),
    stream: int = 0,
) -> list[TaggedSentence]:
    """Sample gold-tagged sentences from the tag Markov chain.

    ``stream`` selects an independent sampling stream for the same
    grammar (train vs held-out corpora).
    """
    if n_sentences < 1:
        raise ConfigError("n_sentences must be >= 1")
    if isinstance(grammar, GrammarSpec):
        grammar = Grammar.build(grammar)
    spec = grammar.spec
    low, high = len_range
    if low < 1 or high < low:
        raise ConfigError(f"bad sentence length range {len_range}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _CORPUS_STREAM, stream]))
    n_tags = len(spec.tags)
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(low, high + 1))
        tags = []
        state = int(rng.choice(n_tags, p=spec.initial))
        for position in range(length):
            if position > 0:
                state = int(rng.choice(n_tags, p=spec.transitions[state]))
            tags.append(spec.tags[state])
        tokens = []
        for tag in tags:
            pool = grammar.emissions[tag]
            tokens.append(pool[int(rng.choice(len(pool), p=grammar.emission_weights[tag]))])
        sentence = Sentence(text=" ".join(tokens), tokens=tuple(tokens))
        sentences.append(TaggedSentence(sentence=sentence, tags=tuple(tags)))
    return sentences


def derive_rules(grammar: Grammar | GrammarSpec, coverage: float = 1.0) -> RuleSet:
    """Rule system from the generator's ground truth.

    Tier 1 holds the requested fraction of unambiguous words, Tier 2
    every ambiguous word, Tier 3 the generating suffixes, and Tier 4
    invalidity 1 - P(next|prev) / max(row).
    """
    if not (0.0 < coverage <= 1.0):
        raise ConfigError(f"coverage {coverage} outside (0, 1]")
    if isinstance(grammar, GrammarSpec):
        grammar = Grammar.build(grammar)
    spec = grammar.spec
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _RULES_STREAM]))
    unambiguous = grammar.unambiguous_words()
    n_keep = int(round(coverage * len(unambiguous)))
    tier1: dict[str, str] = {}
    if n_keep:
        kept = rng.choice(len(unambiguous), size=n_keep, replace=False)
        for index in sorted(kept):
            word = unambiguous[index]
            tier1[word] = grammar.word_tags[word][0]
    tier2 = {
        word: list(tags) for word, tags in grammar.word_tags.items() if len(tags) > 1
    }
    tier3 = [
        MorphRule(kind="suffix", pattern=suffix, tag=tag)
        for tag in spec.tags
        for suffix in grammar.suffixes[tag]
    ]
    overrides = []
    row_max = spec.transitions.max(axis=1)
    for j, from_tag in enumerate(spec.tags):
        for k, to_tag in enumerate(spec.tags):
            validity = spec.transitions[j, k] / row_max[j] if row_max[j] > 0 else 0.0
            overrides.append((from_tag, to_tag, float(validity)))
    return RuleSet(
        tagset=grammar.tagset,
        tier1=tier1,
        tier2=tier2,
        tier3=tier3,
        default_validity=0.5,
        overrides=overrides,
    )


def ner_grammar(
    types: Sequence[str] = ("PER", "LOC"),
    vocab_per_tag: int = 80,
    ambiguity: float = 0.05,
    seed: int = 0,
) -> GrammarSpec:
    """BIO-tagged grammar where entity spans arise from the chain.

    I-x can only follow B-x or I-x, so sampled tag sequences are
    well-formed BIO; span structure is uniform over the chain's runs.
    """
    tags = ["O"]
    for t in types:
        tags.extend([f"B-{t}", f"I-{t}"])
    n = len(tags)
    index = {t: i for i, t in enumerate(tags)}
    transitions = np.zeros((n, n))
    begin_mass = 0.30 / len(types)
    # outside: stay outside or open a span
    transitions[index["O"], index["O"]] = 0.70
    for t in types:
        transitions[index["O"], index[f"B-{t}"]] = begin_mass
    for t in types:
        for prefix in ("B", "I"):
            row = index[f"{prefix}-{t}"]
            transitions[row, index[f"I-{t}"]] = 0.35  # continue the span
            transitions[row, index["O"]] = 0.55
            for other in types:  # immediately open the next entity
                transitions[row, index[f"B-{other}"]] += 0.10 / len(types)
    initial = np.zeros(n)
    initial[index["O"]] = 0.8
    for t in types:
        initial[index[f"B-{t}"]] = 0.2 / len(types)
    return GrammarSpec(
        tags=tuple(tags),
        vocab_per_tag=vocab_per_tag,
        ambiguity=ambiguity,
        transitions=transitions,
        initial=initial,
        seed=seed,
    )


def save_spec(spec: GrammarSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(spec.to_dict(), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def load_spec(path: str | Path) -> GrammarSpec:
    with open(path, encoding="utf-8") as handle:
        return GrammarSpec.from_dict(json.load(handle))
