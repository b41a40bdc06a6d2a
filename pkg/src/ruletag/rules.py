"""The four-tier linguistic rule system.

Tier 1 maps words to a single unambiguous tag, Tier 2 maps words to a
constrained set of valid tags, Tier 3 holds suffix/prefix heuristics,
and Tier 4 is a matrix of transition invalidity scores penalizing
implausible adjacent tag pairs.

Rule files are a single JSON object::

    {
      "tagset": ["PRON", "NOUN", ...],
      "tier1": {"ni": "PRON", ...},
      "tier2": {"no": ["AUX", "VERB"], ...},
      "tier3": [{"kind": "suffix", "pattern": "a", "tag": "NOUN", "priority": 0}, ...],
      "tier4": {"default_validity": 0.5,
                "overrides": [{"from": "DET", "to": "NOUN", "validity": 1.0}, ...]}
    }

Lexicon lookups fold case so that sentence-initial capitalization does
not defeat Tier 1; Tier 3 patterns match the token as written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .corpus import Sentence, TaggedSentence, Tagset
from .errors import ConflictError, IoError, ParseError, ValidationError

DEFAULT_VALIDITY = 0.5


@dataclass(frozen=True)
class MorphRule:
    """A suffix- or prefix-based tag heuristic."""

    kind: str  # "suffix" | "prefix"
    pattern: str
    tag: str
    priority: int = 0

    def matches(self, token: str) -> bool:
        if self.kind == "suffix":
            return len(token) > 0 and token.endswith(self.pattern)
        return len(token) > 0 and token.startswith(self.pattern)


@dataclass(frozen=True)
class RuleMatch:
    """Outcome of matching one token against the rule tiers.

    Exactly one of the four kinds applies.  ``NO_MATCH`` designates the
    token out-of-vocabulary for loss purposes.
    """

    UNAMBIGUOUS = "unambiguous"
    AMBIGUOUS = "ambiguous"
    MORPHOLOGICAL = "morphological"
    NO_MATCH = "no_match"

    kind: str
    tag: str | None = None
    tags: frozenset[str] | None = None

    @classmethod
    def unambiguous(cls, tag: str) -> "RuleMatch":
        return cls(kind=cls.UNAMBIGUOUS, tag=tag)

    @classmethod
    def ambiguous(cls, tags: Iterable[str]) -> "RuleMatch":
        return cls(kind=cls.AMBIGUOUS, tags=frozenset(tags))

    @classmethod
    def morphological(cls, tag: str) -> "RuleMatch":
        return cls(kind=cls.MORPHOLOGICAL, tag=tag)

    @classmethod
    def no_match(cls) -> "RuleMatch":
        return cls(kind=cls.NO_MATCH)

    @property
    def is_covered(self) -> bool:
        """True when any of Tiers 1-3 applies."""
        return self.kind != self.NO_MATCH


class RuleSet:
    """Validated, immutable container for all four rule tiers."""

    def __init__(
        self,
        tagset: Tagset,
        tier1: dict[str, str],
        tier2: dict[str, Iterable[str]],
        tier3: Iterable[MorphRule],
        default_validity: float = DEFAULT_VALIDITY,
        overrides: Iterable[tuple[str, str, float]] = (),
    ):
        self.tagset = tagset
        self.tier1 = {w.casefold(): t for w, t in tier1.items()}
        self.tier2 = {w.casefold(): frozenset(ts) for w, ts in tier2.items()}
        self.tier3 = tuple(tier3)
        self.default_validity = float(default_validity)

        n = len(tagset)
        matrix = np.full((n, n), 1.0 - self.default_validity, dtype=np.float64)
        for from_tag, to_tag, validity in overrides:
            matrix[tagset.index(from_tag), tagset.index(to_tag)] = 1.0 - validity
        self.transition_matrix = matrix
        self._validate()
        self.transition_matrix.setflags(write=False)
        # Sorted by pattern length (longest first) then priority so the
        # first hit wins; ties resolved by definition order.
        self._tier3_ordered = sorted(
            range(len(self.tier3)),
            key=lambda i: (-len(self.tier3[i].pattern), -self.tier3[i].priority, i),
        )

    def _validate(self) -> None:
        for word, tag in self.tier1.items():
            if tag not in self.tagset:
                raise ValidationError(f"tier1 word {word!r} maps to unknown tag {tag!r}")
        for word, tags in self.tier2.items():
            if len(tags) < 2:
                raise ValidationError(f"tier2 word {word!r} needs at least 2 tags")
            for tag in tags:
                if tag not in self.tagset:
                    raise ValidationError(f"tier2 word {word!r} lists unknown tag {tag!r}")
        overlap = sorted(set(self.tier1) & set(self.tier2))
        if overlap:
            raise ConflictError(
                "words in both tier1 and tier2: " + ", ".join(repr(w) for w in overlap)
            )
        for rule in self.tier3:
            if rule.kind not in ("suffix", "prefix"):
                raise ValidationError(f"tier3 rule kind must be suffix or prefix, got {rule.kind!r}")
            if not rule.pattern:
                raise ValidationError("tier3 rule with empty pattern")
            if rule.tag not in self.tagset:
                raise ValidationError(f"tier3 rule {rule.pattern!r} has unknown tag {rule.tag!r}")
        if not (0.0 <= self.default_validity <= 1.0):
            raise ValidationError(f"default_validity {self.default_validity} outside [0,1]")
        if np.any(self.transition_matrix < 0.0) or np.any(self.transition_matrix > 1.0):
            raise ValidationError("transition validity outside [0,1]")

    def match_token(self, token: str) -> RuleMatch:
        """Match one token with tier precedence 1 > 2 > 3 > no-match.

        Lexicon lookup is case-insensitive; morphological patterns see
        the token as written.  Among Tier 3 rules the longest pattern
        wins, then the highest priority.
        """
        folded = token.casefold()
        tag = self.tier1.get(folded)
        if tag is not None:
            return RuleMatch.unambiguous(tag)
        tags = self.tier2.get(folded)
        if tags is not None:
            return RuleMatch.ambiguous(tags)
        for i in self._tier3_ordered:
            rule = self.tier3[i]
            if rule.matches(token):
                return RuleMatch.morphological(rule.tag)
        return RuleMatch.no_match()

    def transition_penalty(self, tag_from: str, tag_to: str) -> float:
        """Invalidity score in [0,1] for the bigram tag_from -> tag_to."""
        return float(self.transition_matrix[self.tagset.index(tag_from), self.tagset.index(tag_to)])

    def to_dict(self) -> dict:
        overrides = []
        default_penalty = 1.0 - self.default_validity
        for j, from_tag in enumerate(self.tagset):
            for k, to_tag in enumerate(self.tagset):
                penalty = self.transition_matrix[j, k]
                if penalty != default_penalty:
                    overrides.append(
                        {"from": from_tag, "to": to_tag, "validity": 1.0 - penalty}
                    )
        return {
            "tagset": list(self.tagset),
            "tier1": dict(sorted(self.tier1.items())),
            "tier2": {w: sorted(ts) for w, ts in sorted(self.tier2.items())},
            "tier3": [
                {"kind": r.kind, "pattern": r.pattern, "tag": r.tag, "priority": r.priority}
                for r in self.tier3
            ],
            "tier4": {"default_validity": self.default_validity, "overrides": overrides},
        }


def load_rules(path: str | Path) -> RuleSet:
    """Load and fully validate a rule file.

    Raises:
        ParseError: the file is not valid JSON.
        ValidationError: unknown tags, bad patterns, validity outside [0,1].
        ConflictError: a word appears in both Tier 1 and Tier 2.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return rules_from_dict(data)


def rules_from_dict(data: dict) -> RuleSet:
    if not isinstance(data, dict):
        raise ValidationError("rule file must contain a JSON object")
    for key in ("tagset", "tier1", "tier2", "tier3", "tier4"):
        if key not in data:
            raise ValidationError(f"rule file missing key {key!r}")
    tagset = Tagset(data["tagset"])
    tier3 = []
    for entry in data["tier3"]:
        tier3.append(
            MorphRule(
                kind=entry.get("kind", "suffix"),
                pattern=entry.get("pattern", ""),
                tag=entry.get("tag", ""),
                priority=int(entry.get("priority", 0)),
            )
        )
    tier4 = data["tier4"]
    overrides = []
    for entry in tier4.get("overrides", []):
        for key in ("from", "to", "validity"):
            if key not in entry:
                raise ValidationError(f"tier4 override missing key {key!r}: {entry}")
        if entry["from"] not in tagset or entry["to"] not in tagset:
            raise ValidationError(
                f"tier4 override references unknown tag: {entry['from']!r} -> {entry['to']!r}"
            )
        validity = float(entry["validity"])
        if not (0.0 <= validity <= 1.0):
            raise ValidationError(
                f"tier4 validity {validity} outside [0,1] for {entry['from']} -> {entry['to']}"
            )
        overrides.append((entry["from"], entry["to"], validity))
    return RuleSet(
        tagset=tagset,
        tier1=dict(data["tier1"]),
        tier2={w: list(ts) for w, ts in data["tier2"].items()},
        tier3=tier3,
        default_validity=float(tier4.get("default_validity", DEFAULT_VALIDITY)),
        overrides=overrides,
    )


def save_rules(rules: RuleSet, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(rules.to_dict(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass
class CoverageReport:
    """Per-tier fraction of corpus tokens matched, plus the OOV rest."""

    tier1: float
    tier2: float
    tier3: float
    oov: float
    total_tokens: int

    def as_dict(self) -> dict:
        return {
            "tier1": self.tier1,
            "tier2": self.tier2,
            "tier3": self.tier3,
            "oov": self.oov,
            "total_tokens": self.total_tokens,
        }


def coverage_report(
    rules: RuleSet, corpus: Iterable[Union[Sentence, TaggedSentence]]
) -> CoverageReport:
    """Fraction of tokens matched by each tier; fractions sum to 1 with OOV."""
    counts = {
        RuleMatch.UNAMBIGUOUS: 0,
        RuleMatch.AMBIGUOUS: 0,
        RuleMatch.MORPHOLOGICAL: 0,
        RuleMatch.NO_MATCH: 0,
    }
    total = 0
    for sent in corpus:
        for token in sent.tokens:
            counts[rules.match_token(token).kind] += 1
            total += 1
    if total == 0:
        return CoverageReport(0.0, 0.0, 0.0, 0.0, 0)
    return CoverageReport(
        tier1=counts[RuleMatch.UNAMBIGUOUS] / total,
        tier2=counts[RuleMatch.AMBIGUOUS] / total,
        tier3=counts[RuleMatch.MORPHOLOGICAL] / total,
        oov=counts[RuleMatch.NO_MATCH] / total,
        total_tokens=total,
    )
