"""Skip-gram word vectors with a full softmax over the vocabulary."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, DataError, DimensionError
from .tensor import Tensor

EMBEDDING_MAGIC = b"EMBD"


@dataclass
class SkipGramParams:
    """Center vectors ``center`` and context vectors ``context``, both K x E."""

    center: Tensor
    context: Tensor
    window: int = 2

    def __post_init__(self):
        if self.center.shape != self.context.shape or self.center.ndim != 2:
            raise DimensionError(
                f"center {self.center.shape} and context {self.context.shape} must be equal K x E"
            )
        if self.window < 1:
            raise ContractError(f"window must be >= 1, got {self.window}")

    @property
    def vocab_size(self) -> int:
        return self.center.shape[0]

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    @classmethod
    def init(cls, vocab_size: int, dim: int, window: int = 2, seed: int = 0) -> "SkipGramParams":
        rng = np.random.default_rng(seed)
        bound = 0.5 / dim
        return cls(
            Tensor(rng.uniform(-bound, bound, (vocab_size, dim)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, (vocab_size, dim)), requires_grad=True),
            window,
        )

    @classmethod
    def zeros(cls, vocab_size: int, dim: int, window: int = 2) -> "SkipGramParams":
        return cls(
            Tensor(np.zeros((vocab_size, dim)), requires_grad=True),
            Tensor(np.zeros((vocab_size, dim)), requires_grad=True),
            window,
        )


def context_pairs(corpus: Sequence[Sequence[int]], window: int) -> list[tuple[int, int]]:
    """(center, context) pairs within ``window`` positions, never across sentences."""
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    pairs = []
    for sentence in corpus:
        n = len(sentence)
        for t, center in enumerate(sentence):
            for j in range(max(0, t - window), min(n, t + window + 1)):
                if j != t:
                    pairs.append((center, sentence[j]))
    return pairs


def _check_index(i: int, k: int) -> None:
    if not 0 <= i < k:
        raise ContractError(f"word index {i} out of range [0, {k})")


def context_distribution(center: int, p: SkipGramParams) -> np.ndarray:
    """P(. | center) over every vocabulary word."""
    _check_index(center, p.vocab_size)
    with T.no_grad():
        scores = T.matmul(p.context, T.take(p.center, center))
        return T.softmax_axis(scores, 0).data


def skipgram_prob(center: int, context: int, p: SkipGramParams) -> float:
    """exp(R_context . S_center) / sum_i exp(R_i . S_center)."""
    _check_index(context, p.vocab_size)
    return float(context_distribution(center, p)[context])


def skipgram_loss(pairs: Sequence[tuple[int, int]], p: SkipGramParams) -> Tensor:
    """Negative log-likelihood summed over the (center, context) pairs."""
    if not pairs:
        raise ContractError("skipgram_loss needs at least one pair")
    idx = np.asarray(pairs, dtype=np.intp)
    for i in idx.reshape(-1):
        _check_index(int(i), p.vocab_size)
    centers = T.take(p.center, idx[:, 0])
    scores = T.matmul(centers, T.transpose(p.context))
    logp = T.log_softmax_axis(scores, 1)
    return T.scale(T.tsum(T.pick(logp, idx[:, 1])), -1.0)


def train_skipgram(
    corpus: Sequence[Sequence[int]],
    p: SkipGramParams,
    steps: int = 200,
    lr: float = 0.5,
) -> list[float]:
    """Full-batch gradient descent on the mean pair loss. Returns the loss per step."""
    pairs = context_pairs(corpus, p.window)
    if not pairs:
        raise ContractError("corpus yields no context pairs")
    history = []
    n = len(pairs)
    for _ in range(steps):
        p.center.zero_grad()
        p.context.zero_grad()
        loss = skipgram_loss(pairs, p)
        history.append(loss.item() / n)
        T.backward(loss)
        p.center.data -= lr * p.center.grad / n
        p.context.data -= lr * p.context.grad / n
    p.center.zero_grad()
    p.context.zero_grad()
    return history


def export_table(p: SkipGramParams) -> np.ndarray:
    """The center vectors, one row per word."""
    return p.center.data.copy()


def save_embeddings(table: np.ndarray, path) -> None:
    table = np.ascontiguousarray(table, dtype="<f8")
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be K x E, got {table.shape}")
    k, e = table.shape
    Path(path).write_bytes(EMBEDDING_MAGIC + struct.pack("<II", k, e) + table.tobytes())


def load_embeddings(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read embeddings {path}: {exc}") from exc
    if raw[:4] != EMBEDDING_MAGIC or len(raw) < 12:
        raise DataError(f"{path}: not an embedding file")
    k, e = struct.unpack_from("<II", raw, 4)
    if len(raw) != 12 + 8 * k * e:
        raise DataError(f"{path}: expected {k}x{e} values, file size {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=12).reshape(k, e).astype(np.float64)
