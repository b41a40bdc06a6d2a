"""The neural tagger: configuration, parameters, forward pass, checkpoints.

Each token is represented by a frozen pretrained word vector
concatenated with a character-level vector from a single-layer
bidirectional LSTM over its characters.  A token-level encoder (a
BiLSTM, or alternatively a pre-norm Transformer stack over a projected
input with sinusoidal positions) contextualizes the sequence, and a
linear head plus softmax yields one tag distribution per token.

Sentences of different lengths are processed together by padding and
index bookkeeping; outputs at padded positions are never read, so the
results match one-sentence-at-a-time evaluation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Sentence, Tagset
from .embeddings import EmbeddingTable
from .errors import ConfigError, IoError, LengthError, NumericalError, ParseError

CHAR_UNK = "\x00"  # index 0 of every character vocabulary

CHECKPOINT_MAGIC = b"RTAG0001"


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    With the defaults the concatenated token input is 300 + 50 = 350
    dimensions and the recurrent encoder output is 2 * 256 = 512.
    """

    architecture: str = "recurrent"  # recurrent | transformer
    n_tags: int = 8
    word_emb_dim: int = 300
    char_emb_dim: int = 50  # char-level token vector (2 x char LSTM hidden)
    char_input_dim: int = 25  # per-character embedding size
    token_hidden: int = 256  # per direction, recurrent encoder
    model_dim: int = 768  # transformer width
    layers: int = 10
    heads: int = 6
    ff_dim: int = 3072
    dropout: float = 0.3
    max_len: int = 512  # transformer position limit
    norm_scheme: str = "pre"

    def __post_init__(self):
        if self.architecture not in ("recurrent", "transformer"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.n_tags < 2:
            raise ConfigError("n_tags must be at least 2")
        if self.char_emb_dim % 2 != 0:
            raise ConfigError("char_emb_dim must be even (two LSTM directions)")
        if self.architecture == "transformer" and self.model_dim % self.heads != 0:
            raise ConfigError("model_dim must be divisible by heads")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout {self.dropout} outside [0,1)")

    @classmethod
    def default(cls, architecture: str, n_tags: int, **overrides) -> "ModelConfig":
        """Standard settings per architecture (dropout 0.3 / 0.1)."""
        defaults = {"architecture": architecture, "n_tags": n_tags}
        if architecture == "transformer":
            defaults["dropout"] = 0.1
        defaults.update(overrides)
        return cls(**defaults)

    @property
    def input_dim(self) -> int:
        return self.word_emb_dim + self.char_emb_dim

    @property
    def char_hidden(self) -> int:
        return self.char_emb_dim // 2

    @property
    def encoder_dim(self) -> int:
        if self.architecture == "recurrent":
            return 2 * self.token_hidden
        return self.model_dim


@dataclass
class TagDistribution:
    """Probability vector over the tagset for one token."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ConfigError(f"tag distribution must be a vector, got {self.probs.shape}")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-6:
            raise NumericalError(f"invalid tag distribution (sum {self.probs.sum()})")

    def argmax(self) -> int:
        # np.argmax breaks ties by lowest index
        return int(np.argmax(self.probs))

    def max_prob(self) -> float:
        return float(self.probs.max())


def build_char_vocab(sentences: Iterable[Sentence]) -> dict[str, int]:
    """Character inventory of a corpus; index 0 is the unknown character."""
    chars = set()
    for sent in sentences:
        for token in sent.tokens:
            chars.update(token)
    vocab = {CHAR_UNK: 0}
    for ch in sorted(chars):
        vocab[ch] = len(vocab)
    return vocab


def _init_matrix(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    scale = np.sqrt(1.0 / fan_in)
    return rng.uniform(-scale, scale, size=shape)


class Tagger:
    """Bundles config, tagset, character vocabulary and parameters."""

    def __init__(
        self,
        config: ModelConfig,
        tagset: Tagset,
        char_vocab: dict[str, int],
        params: dict[str, Tensor],
    ):
        if config.n_tags != len(tagset):
            raise ConfigError(f"config n_tags={config.n_tags} but tagset has {len(tagset)}")
        self.config = config
        self.tagset = tagset
        self.char_vocab = char_vocab
        self.params = params

    # -- construction ---------------------------------------------------------

    @classmethod
    def init(
        cls,
        config: ModelConfig,
        tagset: Tagset,
        char_vocab: dict[str, int],
        seed: int = 0,
    ) -> "Tagger":
        """Fresh parameters: uniform(+-sqrt(1/fan_in)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        p: dict[str, Tensor] = {}

        def weight(name: str, fan_in: int, shape: tuple[int, ...]) -> None:
            p[name] = Tensor.parameter(_init_matrix(rng, fan_in, shape))

        def zeros(name: str, shape: tuple[int, ...]) -> None:
            p[name] = Tensor.parameter(np.zeros(shape))

        def ones(name: str, shape: tuple[int, ...]) -> None:
            p[name] = Tensor.parameter(np.ones(shape))

        hc = config.char_hidden
        weight("char_emb", config.char_input_dim, (len(char_vocab), config.char_input_dim))
        for direction in ("fwd", "bwd"):
            weight(f"char_{direction}_Wx", config.char_input_dim, (config.char_input_dim, 4 * hc))
            weight(f"char_{direction}_Wh", hc, (hc, 4 * hc))
            zeros(f"char_{direction}_b", (4 * hc,))

        if config.architecture == "recurrent":
            ht = config.token_hidden
            for direction in ("fwd", "bwd"):
                weight(f"tok_{direction}_Wx", config.input_dim, (config.input_dim, 4 * ht))
                weight(f"tok_{direction}_Wh", ht, (ht, 4 * ht))
                zeros(f"tok_{direction}_b", (4 * ht,))
        else:
            d = config.model_dim
            weight("proj_W", config.input_dim, (config.input_dim, d))
            zeros("proj_b", (d,))
            for i in range(config.layers):
                ones(f"layer{i}_ln1_g", (d,))
                zeros(f"layer{i}_ln1_b", (d,))
                for mat in ("q", "k", "v", "o"):
                    weight(f"layer{i}_{mat}_W", d, (d, d))
                    zeros(f"layer{i}_{mat}_b", (d,))
                ones(f"layer{i}_ln2_g", (d,))
                zeros(f"layer{i}_ln2_b", (d,))
                weight(f"layer{i}_ff1_W", d, (d, config.ff_dim))
                zeros(f"layer{i}_ff1_b", (config.ff_dim,))
                weight(f"layer{i}_ff2_W", config.ff_dim, (config.ff_dim, d))
                zeros(f"layer{i}_ff2_b", (d,))
            ones("final_ln_g", (d,))
            zeros("final_ln_b", (d,))

        weight("head_W", config.encoder_dim, (config.encoder_dim, config.n_tags))
        zeros("head_b", (config.n_tags,))
        return cls(config, tagset, char_vocab, p)

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    # -- character encoder ------------------------------------------------------

    def _char_indices(self, token: str) -> list[int]:
        unk = self.char_vocab[CHAR_UNK]
        return [self.char_vocab.get(ch, unk) for ch in token]

    def _encode_chars_batch(self, tokens: Sequence[str]) -> Tensor:
        """Char-BiLSTM final states for each token: (n_tokens, char_emb_dim)."""
        n = len(tokens)
        lengths = np.array([max(len(t), 1) for t in tokens])
        maxc = int(lengths.max())
        # Padded index matrices; rows reversed within their own length for
        # the backward direction so padding always sits at the tail.
        fwd_idx = np.zeros((n, maxc), dtype=np.intp)
        bwd_idx = np.zeros((n, maxc), dtype=np.intp)
        for j, token in enumerate(tokens):
            ids = self._char_indices(token) or [0]
            fwd_idx[j, : len(ids)] = ids
            bwd_idx[j, : len(ids)] = ids[::-1]

        hc = self.config.char_hidden
        final = []
        for direction, idx in (("fwd", fwd_idx), ("bwd", bwd_idx)):
            inputs = [ad.take_rows(self.params["char_emb"], idx[:, t]) for t in range(maxc)]
            outs = _lstm_scan(
                inputs,
                self.params[f"char_{direction}_Wx"],
                self.params[f"char_{direction}_Wh"],
                self.params[f"char_{direction}_b"],
                hc,
            )
            stacked = ad.concat(outs, axis=0)  # (maxc * n, hc)
            final_rows = (lengths - 1) * n + np.arange(n)
            final.append(ad.take_rows(stacked, final_rows))
        return ad.concat(final, axis=1)

    def encode_chars(self, token: str) -> np.ndarray:
        """Character-level vector for one token (no gradient recording)."""
        if not token:
            raise ConfigError("cannot encode an empty token")
        return self._encode_chars_batch([token]).value[0]

    # -- forward pass -------------------------------------------------------------

    def forward_graph(
        self,
        sentences: Sequence[Sentence],
        embeddings: EmbeddingTable,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
    ) -> "BatchForward":
        """Differentiable forward pass over a batch of sentences."""
        if not sentences:
            raise ConfigError("empty batch")
        if train_mode and self.config.dropout > 0 and rng is None:
            raise ConfigError("train_mode with dropout needs an RNG for the masks")
        lengths = [len(s.tokens) for s in sentences]
        if min(lengths) == 0:
            raise ConfigError("batch contains an empty sentence")
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        flat_tokens = [tok for s in sentences for tok in s.tokens]

        if embeddings.dim != self.config.word_emb_dim:
            raise ConfigError(
                f"embedding dim {embeddings.dim} does not match "
                f"configured word_emb_dim {self.config.word_emb_dim}"
            )
        word_vecs = Tensor(embeddings.lookup_many(flat_tokens))
        char_vecs = self._encode_chars_batch(flat_tokens)
        x = ad.concat([word_vecs, char_vecs], axis=1)  # (n_tokens, input_dim)
        x = _dropout(x, self.config.dropout, train_mode, rng)

        if self.config.architecture == "recurrent":
            encoded = self._encode_recurrent(x, lengths, offsets)
        else:
            encoded = self._encode_transformer(x, lengths, offsets)

        encoded = _dropout(encoded, self.config.dropout, train_mode, rng)
        logits = encoded @ self.params["head_W"] + self.params["head_b"]
        probs = ad.softmax(logits, axis=-1)
        return BatchForward(probs=probs, offsets=offsets.tolist())

    def _encode_recurrent(self, x: Tensor, lengths: list[int], offsets) -> Tensor:
        batch = len(lengths)
        maxlen = max(lengths)
        n_tokens = x.shape[0]
        # Zero dummy row used for padded steps.
        x_padded = ad.concat([x, Tensor(np.zeros((1, x.shape[1])))], axis=0)
        dummy = n_tokens

        fwd_idx = np.full((maxlen, batch), dummy, dtype=np.intp)
        bwd_idx = np.full((maxlen, batch), dummy, dtype=np.intp)
        for b, length in enumerate(lengths):
            base = offsets[b]
            fwd_idx[:length, b] = base + np.arange(length)
            bwd_idx[:length, b] = base + (length - 1 - np.arange(length))

        ht = self.config.token_hidden
        flat_direction = []
        for direction, idx in (("fwd", fwd_idx), ("bwd", bwd_idx)):
            inputs = [ad.take_rows(x_padded, idx[t]) for t in range(maxlen)]
            outs = _lstm_scan(
                inputs,
                self.params[f"tok_{direction}_Wx"],
                self.params[f"tok_{direction}_Wh"],
                self.params[f"tok_{direction}_b"],
                ht,
            )
            stacked = ad.concat(outs, axis=0)  # (maxlen * batch, ht)
            rows = np.empty(n_tokens, dtype=np.intp)
            for b, length in enumerate(lengths):
                positions = np.arange(length)
                scan_pos = positions if direction == "fwd" else length - 1 - positions
                rows[offsets[b] : offsets[b + 1]] = scan_pos * batch + b
            flat_direction.append(ad.take_rows(stacked, rows))
        return ad.concat(flat_direction, axis=1)  # (n_tokens, 2 * ht)

    def _encode_transformer(self, x: Tensor, lengths: list[int], offsets) -> Tensor:
        cfg = self.config
        batch = len(lengths)
        maxlen = max(lengths)
        if maxlen > cfg.max_len:
            raise LengthError(f"sentence length {maxlen} exceeds maximum {cfg.max_len}")
        n_tokens = x.shape[0]
        d = cfg.model_dim

        h = x @ self.params["proj_W"] + self.params["proj_b"]  # (n_tokens, d)
        positions = np.concatenate([np.arange(n) for n in lengths])
        h = h + Tensor(sinusoidal_encoding(cfg.max_len, d)[positions])

        # Scatter into a (batch * maxlen, d) padded layout.
        h_padded = ad.concat([h, Tensor(np.zeros((1, d)))], axis=0)
        pad_idx = np.full(batch * maxlen, n_tokens, dtype=np.intp)
        valid_rows = np.empty(n_tokens, dtype=np.intp)
        for b, length in enumerate(lengths):
            pad_idx[b * maxlen : b * maxlen + length] = np.arange(offsets[b], offsets[b + 1])
            valid_rows[offsets[b] : offsets[b + 1]] = b * maxlen + np.arange(length)
        h = ad.take_rows(h_padded, pad_idx)  # (batch * maxlen, d)

        # Additive attention mask: padded key positions get -inf per sentence.
        key_mask = np.zeros((batch, maxlen))
        for b, length in enumerate(lengths):
            key_mask[b, length:] = -1e30
        mask = np.broadcast_to(
            key_mask[:, None, None, :], (batch, cfg.heads, maxlen, maxlen)
        ).reshape(batch * cfg.heads, maxlen, maxlen)
        mask_t = Tensor(mask.copy())

        for i in range(cfg.layers):
            attn_in = _layer_norm(h, self.params[f"layer{i}_ln1_g"], self.params[f"layer{i}_ln1_b"])
            h = h + self._attention(attn_in, i, batch, maxlen, mask_t)
            ff_in = _layer_norm(h, self.params[f"layer{i}_ln2_g"], self.params[f"layer{i}_ln2_b"])
            ff = ad.relu(ff_in @ self.params[f"layer{i}_ff1_W"] + self.params[f"layer{i}_ff1_b"])
            h = h + (ff @ self.params[f"layer{i}_ff2_W"] + self.params[f"layer{i}_ff2_b"])

        h = _layer_norm(h, self.params["final_ln_g"], self.params["final_ln_b"])
        return ad.take_rows(h, valid_rows)  # back to (n_tokens, d)

    def _attention(
        self, x: Tensor, layer: int, batch: int, maxlen: int, mask: Tensor
    ) -> Tensor:
        cfg = self.config
        d, heads = cfg.model_dim, cfg.heads
        dh = d // heads

        def split_heads(t: Tensor) -> Tensor:
            t = ad.reshape(t, (batch, maxlen, heads, dh))
            t = ad.swapaxes(t, 1, 2)  # (batch, heads, maxlen, dh)
            return ad.reshape(t, (batch * heads, maxlen, dh))

        q = split_heads(x @ self.params[f"layer{layer}_q_W"] + self.params[f"layer{layer}_q_b"])
        k = split_heads(x @ self.params[f"layer{layer}_k_W"] + self.params[f"layer{layer}_k_b"])
        v = split_heads(x @ self.params[f"layer{layer}_v_W"] + self.params[f"layer{layer}_v_b"])

        scores = (q @ ad.swapaxes(k, 1, 2)) * (1.0 / np.sqrt(dh)) + mask
        weights = ad.softmax(scores, axis=-1)
        ctx = weights @ v  # (batch * heads, maxlen, dh)
        ctx = ad.reshape(ctx, (batch, heads, maxlen, dh))
        ctx = ad.swapaxes(ctx, 1, 2)
        ctx = ad.reshape(ctx, (batch * maxlen, d))
        return ctx @ self.params[f"layer{layer}_o_W"] + self.params[f"layer{layer}_o_b"]

    def forward(
        self,
        sentence: Sentence,
        embeddings: EmbeddingTable,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
    ) -> list[TagDistribution]:
        """Tag distributions for one sentence (length N, rows sum to 1)."""
        out = self.forward_graph([sentence], embeddings, train_mode=train_mode, rng=rng)
        return [TagDistribution(row) for row in out.probs.value]

    # -- persistence -------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "Tagger":
        return load_checkpoint(path)


@dataclass
class BatchForward:
    """Output of a batched forward pass.

    ``probs`` holds one row per token, sentences concatenated in order;
    ``offsets[j]:offsets[j+1]`` delimits sentence ``j``.
    """

    probs: Tensor
    offsets: list[int]

    @property
    def n_sentences(self) -> int:
        return len(self.offsets) - 1

    def sentence_probs(self, j: int) -> Tensor:
        start, end = self.offsets[j], self.offsets[j + 1]
        return ad.narrow(self.probs, 0, start, end - start)


def _lstm_scan(
    inputs: list[Tensor], Wx: Tensor, Wh: Tensor, b: Tensor, hidden: int
) -> list[Tensor]:
    """Single-direction LSTM over per-step input rows; returns h per step."""
    batch = inputs[0].shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outs = []
    for x in inputs:
        z = x @ Wx + h @ Wh + b
        gate_i = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
        gate_f = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
        gate_g = ad.tanh(ad.narrow(z, 1, 2 * hidden, hidden))
        gate_o = ad.sigmoid(ad.narrow(z, 1, 3 * hidden, hidden))
        c = gate_f * c + gate_i * gate_g
        h = gate_o * ad.tanh(c)
        outs.append(h)
    return outs


def _dropout(
    x: Tensor, rate: float, train_mode: bool, rng: np.random.Generator | None
) -> Tensor:
    if not train_mode or rate <= 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = ad.tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.tmean(centered * centered, axis=-1, keepdims=True)
    return centered / ad.sqrt(var + eps) * gain + bias


def sinusoidal_encoding(max_len: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal position encodings, shape (max_len, dim)."""
    positions = np.arange(max_len)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-np.log(10000.0) / dim))
    enc = np.zeros((max_len, dim))
    enc[:, 0::2] = np.sin(positions * div)
    enc[:, 1::2] = np.cos(positions * div[: dim // 2])
    return enc


# -- gradients ---------------------------------------------------------------------


def backward(loss: Tensor, tagger: Tagger) -> dict[str, np.ndarray]:
    """Backpropagate a scalar loss; returns the gradient per parameter.

    Parameters untouched by the loss get zero gradients.
    """
    tagger.zero_grads()
    loss.backward()
    grads = {}
    for name, param in tagger.params.items():
        grads[name] = (
            param.grad if param.grad is not None else np.zeros(param.shape)
        )
    return grads


# -- checkpoint container -----------------------------------------------------------
#
# Layout: magic, little-endian uint64 header length, UTF-8 JSON header
# (config, tagset, char vocab, tensor index), then raw float64 bytes.
# Fully deterministic: equal taggers produce byte-identical files.


def save_checkpoint(tagger: Tagger, path: str | Path) -> None:
    names = list(tagger.params)
    tensors = []
    offset = 0
    for name in names:
        arr = tagger.params[name].value
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "config": asdict(tagger.config),
        "tagset": list(tagger.tagset),
        "char_vocab": sorted(tagger.char_vocab.items(), key=lambda kv: kv[1]),
        "tensors": tensors,
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as handle:
            handle.write(CHECKPOINT_MAGIC)
            handle.write(struct.pack("<Q", len(blob)))
            handle.write(blob)
            for name in names:
                arr = np.ascontiguousarray(tagger.params[name].value, dtype="<f8")
                handle.write(arr.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> Tagger:
    try:
        with open(path, "rb") as handle:
            magic = handle.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ParseError(f"{path} is not a checkpoint (bad magic {magic!r})")
            (header_len,) = struct.unpack("<Q", handle.read(8))
            header = json.loads(handle.read(header_len).decode("utf-8"))
            data = handle.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    config = ModelConfig(**header["config"])
    tagset = Tagset(header["tagset"])
    char_vocab = {ch: idx for ch, idx in header["char_vocab"]}
    params: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=start).reshape(shape)
        params[entry["name"]] = Tensor.parameter(arr.copy())
    return Tagger(config, tagset, char_vocab, params)
