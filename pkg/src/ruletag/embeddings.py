"""Loading and generating pretrained word embedding tables.

The on-disk format is the common text layout: an optional header line
``V D`` followed by one ``word v1 ... vD`` line per word.  Unknown
words look up a shared OOV vector, the column-wise mean of all rows.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError, IoError, ParseError


class EmbeddingTable:
    """Word -> fixed vector map with a mean-vector OOV fallback."""

    def __init__(self, vocab: dict[str, int], vectors: np.ndarray):
        if vectors.ndim != 2 or len(vocab) != vectors.shape[0]:
            raise ConfigError(
                f"vocab size {len(vocab)} does not match vector rows {vectors.shape}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ParseError("embedding table contains non-finite values")
        self.vocab = vocab
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.oov_vector = self.vectors.mean(axis=0) if len(vocab) else np.zeros(0)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def lookup(self, word: str) -> np.ndarray:
        index = self.vocab.get(word)
        if index is None:
            return self.oov_vector
        return self.vectors[index]

    def lookup_many(self, words) -> np.ndarray:
        return np.stack([self.lookup(w) for w in words])


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> EmbeddingTable:
    """Load a text-format embedding file.

    Raises:
        ParseError: a line has the wrong number of values.
        ConfigError: the file's dimension differs from ``expected_dim``.
    """
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    dim: int | None = None
    try:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                parts = line.rstrip("\n").split(" ")
                if not line.strip():
                    continue
                if lineno == 1 and len(parts) == 2:
                    # header: vocabulary size and dimension
                    try:
                        dim = int(parts[1])
                    except ValueError as exc:
                        raise ParseError(f"bad header: {line!r}", line=lineno) from exc
                    continue
                word = parts[0]
                try:
                    vector = np.array([float(v) for v in parts[1:] if v], dtype=np.float64)
                except ValueError as exc:
                    raise ParseError(f"bad vector value for {word!r}", line=lineno) from exc
                if dim is None:
                    dim = vector.shape[0]
                if vector.shape[0] != dim:
                    raise ParseError(
                        f"{word!r} has {vector.shape[0]} values, expected {dim}", line=lineno
                    )
                if word in vocab:
                    raise ParseError(f"duplicate word {word!r}", line=lineno)
                vocab[word] = len(rows)
                rows.append(vector)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"no embedding rows in {path}")
    if expected_dim is not None and dim != expected_dim:
        raise ConfigError(f"embedding dim {dim} does not match configured {expected_dim}")
    return EmbeddingTable(vocab, np.stack(rows))


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Write the table in text format with a ``V D`` header."""
    words = sorted(table.vocab, key=table.vocab.get)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(f"{len(words)} {table.dim}\n")
            for word in words:
                vec = table.vectors[table.vocab[word]]
                handle.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def subword_embeddings(words, dim: int, seed: int) -> EmbeddingTable:
    """Deterministic embeddings from hashed character n-grams.

    Each word's vector is the normalized sum of vectors for its
    character trigrams (with boundary markers) plus a whole-word
    vector, so words sharing affixes land near each other.  Stands in
    for distributionally pretrained vectors when none exist.
    """
    words = list(dict.fromkeys(words))
    rng_cache: dict[int, np.ndarray] = {}

    def bucket_vector(key: str) -> np.ndarray:
        # Stable across runs: hash via a small FNV-1a, not hash().
        h = 2166136261
        for b in key.encode("utf-8"):
            h = ((h ^ b) * 16777619) & 0xFFFFFFFF
        if h not in rng_cache:
            rng = np.random.default_rng(np.random.SeedSequence([seed, h]))
            rng_cache[h] = rng.standard_normal(dim)
        return rng_cache[h]

    vectors = np.zeros((len(words), dim), dtype=np.float64)
    for i, word in enumerate(words):
        marked = f"<{word}>"
        acc = bucket_vector(word)
        for j in range(len(marked) - 2):
            acc = acc + bucket_vector(marked[j : j + 3])
        norm = np.linalg.norm(acc)
        vectors[i] = acc / norm if norm > 0 else acc
    return EmbeddingTable({w: i for i, w in enumerate(words)}, vectors)
