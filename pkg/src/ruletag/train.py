"""Optimization loops: unsupervised rule-loss training and supervised
fine-tuning, with Adam, decoupled weight decay and global-norm clipping.

Runs are reproducible: given the same config, rules, corpus, embeddings
and seed, checkpoints and loss logs are byte-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import Sentence, TaggedSentence
from .embeddings import EmbeddingTable
from .errors import ConfigError, DegenerateRulesWarning, EmptyInput, NumericalError, SchemaError
from .losses import SFT, UNSUPERVISED, LossBreakdown, LossWeights, total_loss
from .model import ModelConfig, Tagger, backward, build_char_vocab, save_checkpoint
from .rules import RuleSet

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Optimization hyperparameters for one run."""

    mode: str = UNSUPERVISED  # unsupervised | sft
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    max_grad_norm: float = 1.0
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    keep_rule_loss_in_sft: bool = False

    def __post_init__(self):
        if self.mode not in (UNSUPERVISED, SFT):
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_grad_norm <= 0:
            raise ConfigError("max_grad_norm must be positive")

    @classmethod
    def default(cls, mode: str, architecture: str = "recurrent", **overrides) -> "TrainConfig":
        """Published regime: BiLSTM lr 1e-3 / batch 256; Transformer lr 5e-5 /
        batch 64; 30 epochs unsupervised, 20 for fine-tuning."""
        values = {"mode": mode}
        if architecture == "transformer":
            values.update(learning_rate=5e-5, batch_size=64)
        if mode == SFT:
            values["epochs"] = 20
        values.update(overrides)
        return cls(**values)


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(
            m={name: np.zeros(p.shape) for name, p in params.items()},
            v={name: np.zeros(p.shape) for name, p in params.items()},
        )


def adam_step(
    params: dict,
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    weight_decay: float = 0.0,
) -> AdamState:
    """One bias-corrected Adam update with decoupled weight decay.

    Raises NumericalError (and leaves everything untouched) if any
    gradient is non-finite.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for {name}; step aborted")
    state.step += 1
    bias1 = 1.0 - ADAM_BETA1**state.step
    bias2 = 1.0 - ADAM_BETA2**state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        update = (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
        if weight_decay:
            update = update + weight_decay * param.value
        param.value = param.value - learning_rate * update
    return state


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for grad in grads.values():
        total += float(np.sum(grad * grad))
    return float(np.sqrt(total))


def clip_gradients(
    grads: dict[str, np.ndarray], max_norm: float
) -> dict[str, np.ndarray]:
    """Scale all gradients so the global L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    norm = global_grad_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {name: grad * scale for name, grad in grads.items()}


@dataclass
class TrainResult:
    tagger: Tagger
    history: list[LossBreakdown]
    checkpoint_paths: list[Path] = field(default_factory=list)


def train_unsupervised(
    config: TrainConfig,
    model_config: ModelConfig,
    rules: RuleSet,
    corpus: Sequence[Sentence],
    embeddings: EmbeddingTable,
    outdir: str | Path | None = None,
) -> TrainResult:
    """Train a fresh tagger from unlabeled text and the rule system.

    Emits a DegenerateRulesWarning (and keeps going) when no token in
    the corpus is covered by any tier; the lexical term then contributes
    nothing.
    """
    if not corpus:
        raise EmptyInput("unsupervised training needs a non-empty corpus")
    tagger = Tagger.init(model_config, rules.tagset, build_char_vocab(corpus), seed=config.seed)

    match_cache: dict[str, object] = {}

    def matches_for(sentence: Sentence):
        out = []
        for token in sentence.tokens:
            m = match_cache.get(token)
            if m is None:
                m = rules.match_token(token)
                match_cache[token] = m
            out.append(m)
        return out

    all_matches = [matches_for(s) for s in corpus]
    if all(not m.is_covered for sent in all_matches for m in sent):
        warnings.warn(
            "no token in the corpus matches any rule tier; "
            "the lexical loss will contribute nothing",
            DegenerateRulesWarning,
        )

    def batch_loss(out, batch_indices):
        dists = [out.sentence_probs(j) for j in range(out.n_sentences)]
        matches = [all_matches[i] for i in batch_indices]
        return total_loss(
            dists,
            matches=matches,
            transition=rules.transition_matrix,
            weights=config.weights,
            mode=UNSUPERVISED,
            tagset=rules.tagset,
        )

    return _fit(tagger, config, list(corpus), embeddings, batch_loss, outdir)


def train_sft(
    config: TrainConfig,
    tagger: Tagger,
    gold: Sequence[TaggedSentence],
    embeddings: EmbeddingTable,
    rules: RuleSet | None = None,
    outdir: str | Path | None = None,
) -> TrainResult:
    """Fine-tune an existing tagger on gold tags with cross-entropy.

    With ``config.keep_rule_loss_in_sft`` the rule objective is added on
    top of the cross-entropy term (requires ``rules``).
    """
    if not gold:
        raise EmptyInput("fine-tuning needs a non-empty gold corpus")
    tagset = tagger.tagset
    for sent in gold:
        for tag in sent.tags:
            if tag not in tagset:
                raise SchemaError(f"gold tag {tag!r} not in tagset {list(tagset)}")
    gold_indices = [[tagset.index(t) for t in sent.tags] for sent in gold]
    if config.keep_rule_loss_in_sft and rules is None:
        raise ConfigError("keep_rule_loss_in_sft requires the rule set")

    def batch_loss(out, batch_indices):
        dists = [out.sentence_probs(j) for j in range(out.n_sentences)]
        ce, breakdown = total_loss(
            dists,
            mode=SFT,
            gold=[gold_indices[i] for i in batch_indices],
        )
        if config.keep_rule_loss_in_sft:
            matches = [
                [rules.match_token(tok) for tok in gold[i].tokens] for i in batch_indices
            ]
            rule_term, _ = total_loss(
                dists,
                matches=matches,
                transition=rules.transition_matrix,
                weights=config.weights,
                mode=UNSUPERVISED,
                tagset=tagset,
            )
            ce = ce + rule_term
        return ce, breakdown

    sentences = [sent.sentence for sent in gold]
    return _fit(tagger, config, sentences, embeddings, batch_loss, None)


def _fit(
    tagger: Tagger,
    config: TrainConfig,
    sentences: list[Sentence],
    embeddings: EmbeddingTable,
    batch_loss: Callable,
    outdir: str | Path | None,
) -> TrainResult:
    rng = np.random.default_rng(config.seed)
    state = AdamState.init(tagger.params)
    history: list[LossBreakdown] = []
    checkpoints: list[Path] = []
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(sentences))
        epoch_breakdowns: list[LossBreakdown] = []
        for start in range(0, len(sentences), config.batch_size):
            batch_indices = order[start : start + config.batch_size]
            batch = [sentences[i] for i in batch_indices]
            out = tagger.forward_graph(batch, embeddings, train_mode=True, rng=rng)
            loss, breakdown = batch_loss(out, batch_indices)
            grads = backward(loss, tagger)
            # No signal at all (e.g. every loss weight zero): leave the
            # parameters alone rather than applying bare weight decay.
            if global_grad_norm(grads) > 0.0:
                grads = clip_gradients(grads, config.max_grad_norm)
                adam_step(
                    tagger.params, grads, state, config.learning_rate, config.weight_decay
                )
            epoch_breakdowns.append(breakdown)
        history.append(aggregate_breakdowns(epoch_breakdowns))
        if outdir is not None:
            path = outdir / f"epoch_{epoch:03d}.ckpt"
            save_checkpoint(tagger, path)
            checkpoints.append(path)

    if outdir is not None:
        final = outdir / "final.ckpt"
        save_checkpoint(tagger, final)
        checkpoints.append(final)
        write_loss_csv(history, outdir / "loss.csv")
    return TrainResult(tagger=tagger, history=history, checkpoint_paths=checkpoints)


def aggregate_breakdowns(breakdowns: Sequence[LossBreakdown]) -> LossBreakdown:
    """Combine batch breakdowns into one, weighting by contribution counts."""
    if not breakdowns:
        raise ConfigError("nothing to aggregate")
    weights = breakdowns[0].weights

    def weighted(attr: str, count_attr: str) -> tuple[float, int]:
        total_count = sum(getattr(b, count_attr) for b in breakdowns)
        if total_count == 0:
            return 0.0, 0
        value = (
            sum(getattr(b, attr) * getattr(b, count_attr) for b in breakdowns) / total_count
        )
        return value, total_count

    lex, lex_tokens = weighted("lex", "lex_tokens")
    syn, syn_pairs = weighted("syn", "syn_pairs")
    oov, oov_tokens = weighted("oov", "oov_tokens")
    dist, total_tokens = weighted("dist", "total_tokens")
    total = (
        weights.alpha * lex + weights.beta * syn + weights.gamma * dist + weights.delta * oov
    )
    return LossBreakdown(
        lex=lex,
        syn=syn,
        dist=dist,
        oov=oov,
        total=total,
        weights=weights,
        lex_tokens=lex_tokens,
        syn_pairs=syn_pairs,
        oov_tokens=oov_tokens,
        total_tokens=total_tokens,
    )


def write_loss_csv(history: Sequence[LossBreakdown], path: str | Path) -> None:
    """Per-epoch loss components; float repr keeps the file byte-stable."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("epoch,lex,syn,dist,oov,total\n")
        for epoch, b in enumerate(history, 1):
            handle.write(
                f"{epoch},{b.lex!r},{b.syn!r},{b.dist!r},{b.oov!r},{b.total!r}\n"
            )
