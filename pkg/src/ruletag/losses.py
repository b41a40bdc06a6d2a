"""Rule-informed loss components and their weighted combination.

Four terms train the tagger without labels:

* lexical: negative log-likelihood of the rule tag for tokens covered
  by the unambiguous lexicon or a morphological rule, and negative log
  of the summed probability over the valid set for ambiguous tokens;
* syntactic: mean bilinear penalty ``p_i^T M p_{i+1}`` over adjacent
  token pairs, where M holds transition invalidity scores;
* distributional: KL divergence between the batch-mean distribution
  and uniform, discouraging tagset collapse;
* OOV: per-token KL divergence from uniform for tokens no rule covers,
  teaching calibrated uncertainty on unknown words.

Supervised fine-tuning replaces all of this with plain cross-entropy.

Probabilities are clamped at 1e-12 before any log.  All functions
accept plain arrays, :class:`TagDistribution` or autodiff tensors and
return scalar tensors, so the same code path serves training and
direct evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Tagset
from .errors import ConfigError, ShapeError
from .model import TagDistribution
from .rules import RuleMatch

LOG_EPS = 1e-12

UNSUPERVISED = "unsupervised"
SFT = "sft"


@dataclass(frozen=True)
class LossWeights:
    """Mixture coefficients of the four loss components."""

    alpha: float = 0.85  # lexical
    beta: float = 0.08  # syntactic
    gamma: float = 0.02  # distributional
    delta: float = 0.05  # OOV

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be non-negative")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.delta)


@dataclass
class LossBreakdown:
    """Per-component values for one batch, plus contribution counts."""

    lex: float
    syn: float
    dist: float
    oov: float
    total: float
    weights: LossWeights
    lex_tokens: int = 0
    syn_pairs: int = 0
    oov_tokens: int = 0
    total_tokens: int = 0

    def components(self) -> dict[str, float]:
        return {
            "lex": self.lex,
            "syn": self.syn,
            "dist": self.dist,
            "oov": self.oov,
            "total": self.total,
        }


def _probs(dist) -> Tensor:
    """Lift a distribution-like argument to a tensor."""
    if isinstance(dist, Tensor):
        return dist
    if isinstance(dist, TagDistribution):
        return Tensor(dist.probs)
    return Tensor(np.asarray(dist, dtype=np.float64))


def _log_clamped(x: Tensor) -> Tensor:
    return ad.log(ad.clamp_min(x, LOG_EPS))


def lex_loss(dist, match: RuleMatch, tagset: Tagset) -> Tensor | None:
    """Lexical loss for one token, or None when no rule covers it.

    Unambiguous and morphological matches use -log p(tag); ambiguous
    matches use -log of the summed probability of all valid tags.
    """
    p = _probs(dist)
    if match.kind in (RuleMatch.UNAMBIGUOUS, RuleMatch.MORPHOLOGICAL):
        mask = np.zeros(len(tagset))
        mask[tagset.index(match.tag)] = 1.0
    elif match.kind == RuleMatch.AMBIGUOUS:
        mask = np.zeros(len(tagset))
        for tag in match.tags:
            mask[tagset.index(tag)] = 1.0
    else:
        return None
    covered = ad.tsum(p * Tensor(mask))
    return -_log_clamped(covered)


def syn_loss(dists, transition: np.ndarray) -> Tensor:
    """Mean transition penalty over adjacent pairs of one sentence.

    Zero for single-token sentences.
    """
    p = _stack_distributions(dists)
    n, n_tags = p.shape
    transition = np.asarray(transition, dtype=np.float64)
    if transition.shape != (n_tags, n_tags):
        raise ShapeError(
            f"transition matrix {transition.shape} does not match {n_tags} tags"
        )
    if n < 2:
        return Tensor(0.0)
    left = ad.narrow(p, 0, 0, n - 1) @ Tensor(transition)
    right = ad.narrow(p, 0, 1, n - 1)
    return ad.tsum(left * right) * (1.0 / (n - 1))


def _kl_from_uniform(p: Tensor) -> Tensor:
    """KL(p || uniform) summed along the last axis."""
    n_tags = p.shape[-1]
    return ad.tsum(p * (_log_clamped(p) + np.log(n_tags)), axis=-1)


def dist_loss(mean_dist) -> Tensor:
    """KL divergence of the batch-mean distribution from uniform."""
    return _kl_from_uniform(_probs(mean_dist))


def oov_loss(dist) -> Tensor:
    """KL divergence from uniform for one uncovered token."""
    return _kl_from_uniform(_probs(dist))


def _stack_distributions(dists) -> Tensor:
    if isinstance(dists, Tensor):
        return dists
    if isinstance(dists, np.ndarray):
        return Tensor(dists)
    rows = [_probs(d) for d in dists]
    if len(rows) == 1:
        return ad.reshape(rows[0], (1, rows[0].shape[-1]))
    return ad.concat([ad.reshape(r, (1, r.shape[-1])) for r in rows], axis=0)


def total_loss(
    dists: Sequence,
    matches: Sequence[Sequence[RuleMatch]] | None = None,
    transition: np.ndarray | None = None,
    weights: LossWeights = LossWeights(),
    mode: str = UNSUPERVISED,
    gold: Sequence[Sequence[int]] | None = None,
    tagset: Tagset | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Combined objective over a batch of sentences.

    ``dists`` holds one (N_j, |T|) probability matrix per sentence.  In
    unsupervised mode ``matches``, ``transition`` and ``tagset`` drive
    the four rule components; in SFT mode only ``gold`` (tag indices
    per sentence) is used and the result is mean cross-entropy.

    Returns the scalar loss tensor plus a numeric breakdown.
    """
    mats = [_stack_distributions(d) for d in dists]
    total_tokens = sum(m.shape[0] for m in mats)
    if total_tokens == 0:
        raise ConfigError("empty batch")

    if mode == SFT:
        if gold is None:
            raise ConfigError("sft mode requires gold tags")
        return _cross_entropy(mats, gold, weights)
    if mode != UNSUPERVISED:
        raise ConfigError(f"unknown loss mode {mode!r}")
    if matches is None or transition is None or tagset is None:
        raise ConfigError("unsupervised mode requires matches, transition and tagset")

    n_tags = mats[0].shape[1]
    trans_t = Tensor(np.asarray(transition, dtype=np.float64))
    if trans_t.shape != (n_tags, n_tags):
        raise ShapeError(f"transition matrix {trans_t.shape} does not match {n_tags} tags")

    lex_sum = Tensor(0.0)
    oov_sum = Tensor(0.0)
    syn_sum = Tensor(0.0)
    token_sum = Tensor(np.zeros(n_tags))
    lex_tokens = 0
    oov_tokens = 0
    syn_pairs = 0

    for p, sent_matches in zip(mats, matches):
        n = p.shape[0]
        if len(sent_matches) != n:
            raise ShapeError(f"{n} distributions but {len(sent_matches)} rule matches")

        hard_rows, hard_mask = [], []
        ambig_rows, ambig_mask = [], []
        oov_rows = []
        for i, match in enumerate(sent_matches):
            if match.kind in (RuleMatch.UNAMBIGUOUS, RuleMatch.MORPHOLOGICAL):
                row = np.zeros(n_tags)
                row[tagset.index(match.tag)] = 1.0
                hard_rows.append(i)
                hard_mask.append(row)
            elif match.kind == RuleMatch.AMBIGUOUS:
                row = np.zeros(n_tags)
                for tag in match.tags:
                    row[tagset.index(tag)] = 1.0
                ambig_rows.append(i)
                ambig_mask.append(row)
            else:
                oov_rows.append(i)

        for rows, mask in ((hard_rows, hard_mask), (ambig_rows, ambig_mask)):
            if rows:
                selected = ad.take_rows(p, np.array(rows))
                in_set = ad.tsum(selected * Tensor(np.array(mask)), axis=1)
                lex_sum = lex_sum - ad.tsum(_log_clamped(in_set))
                lex_tokens += len(rows)
        if oov_rows:
            selected = ad.take_rows(p, np.array(oov_rows))
            oov_sum = oov_sum + ad.tsum(_kl_from_uniform(selected))
            oov_tokens += len(oov_rows)
        if n >= 2:
            left = ad.narrow(p, 0, 0, n - 1) @ trans_t
            syn_sum = syn_sum + ad.tsum(left * ad.narrow(p, 0, 1, n - 1))
            syn_pairs += n - 1
        token_sum = token_sum + ad.tsum(p, axis=0)

    lex = lex_sum * (1.0 / lex_tokens) if lex_tokens else Tensor(0.0)
    oov = oov_sum * (1.0 / oov_tokens) if oov_tokens else Tensor(0.0)
    syn = syn_sum * (1.0 / syn_pairs) if syn_pairs else Tensor(0.0)
    dist = _kl_from_uniform(token_sum * (1.0 / total_tokens))

    total = weights.alpha * lex + weights.beta * syn + weights.gamma * dist + weights.delta * oov
    breakdown = LossBreakdown(
        lex=float(lex),
        syn=float(syn),
        dist=float(dist),
        oov=float(oov),
        total=float(total),
        weights=weights,
        lex_tokens=lex_tokens,
        syn_pairs=syn_pairs,
        oov_tokens=oov_tokens,
        total_tokens=total_tokens,
    )
    return total, breakdown


def _cross_entropy(
    mats: list[Tensor], gold: Sequence[Sequence[int]], weights: LossWeights
) -> tuple[Tensor, LossBreakdown]:
    """Mean token-level NLL of the gold tags; rule weights are ignored."""
    nll_sum = Tensor(0.0)
    total_tokens = 0
    for p, sent_gold in zip(mats, gold):
        n, n_tags = p.shape
        if len(sent_gold) != n:
            raise ShapeError(f"{n} distributions but {len(sent_gold)} gold tags")
        onehot = np.zeros((n, n_tags))
        onehot[np.arange(n), np.asarray(sent_gold, dtype=int)] = 1.0
        picked = ad.tsum(p * Tensor(onehot), axis=1)
        nll_sum = nll_sum - ad.tsum(_log_clamped(picked))
        total_tokens += n
    ce = nll_sum * (1.0 / total_tokens)
    value = float(ce)
    breakdown = LossBreakdown(
        lex=value,
        syn=0.0,
        dist=0.0,
        oov=0.0,
        total=value,
        weights=LossWeights(1.0, 0.0, 0.0, 0.0),
        lex_tokens=total_tokens,
        total_tokens=total_tokens,
    )
    return ce, breakdown
