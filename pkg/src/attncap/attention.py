"""Additive (Bahdanau) attention over encoder positions."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class AttentionParams:
    """score_j = v . tanh(W_s s + W_h h_j); no biases (softmax would cancel the outer one)."""

    W_s: Tensor
    W_h: Tensor
    v: Tensor

    def __post_init__(self):
        a = self.v.shape[0] if self.v.ndim == 1 else -1
        if self.W_s.ndim != 2 or self.W_h.ndim != 2 or self.W_s.shape[0] != a or self.W_h.shape[0] != a:
            raise DimensionError(
                f"attention shapes W_s {self.W_s.shape}, W_h {self.W_h.shape}, v {self.v.shape} disagree"
            )

    @property
    def attn_dim(self) -> int:
        return self.v.shape[0]

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def init(cls, dec_dim: int, enc_dim: int, attn_dim: int, rng: np.random.Generator) -> "AttentionParams":
        bound = 1.0 / np.sqrt(attn_dim)
        return cls(
            Tensor(rng.uniform(-bound, bound, (attn_dim, dec_dim)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, (attn_dim, enc_dim)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, attn_dim), requires_grad=True),
        )

    @classmethod
    def zeros(cls, dec_dim: int, enc_dim: int, attn_dim: int) -> "AttentionParams":
        return cls(
            Tensor(np.zeros((attn_dim, dec_dim)), requires_grad=True),
            Tensor(np.zeros((attn_dim, enc_dim)), requires_grad=True),
            Tensor(np.zeros(attn_dim), requires_grad=True),
        )


@dataclass
class AttentionOutput:
    weights: Tensor
    context: Tensor
    scores: Tensor


def project_keys(enc: Tensor, p: AttentionParams) -> Tensor:
    """W_h h_j for every position, as a T x A matrix; reusable across decode steps."""
    if enc.ndim != 2 or enc.shape[1] != p.W_h.shape[1]:
        raise DimensionError(f"encoder states {enc.shape} do not match W_h {p.W_h.shape}")
    return T.matmul(enc, T.transpose(p.W_h))


def attend(s_prev: Tensor, enc: Tensor, p: AttentionParams, keys: Tensor | None = None) -> AttentionOutput:
    """Weights over the T encoder rows and the weighted context vector.

    ``keys`` may carry a precomputed :func:`project_keys` result for ``enc``.
    """
    if enc.ndim != 2 or enc.shape[0] < 1:
        raise ContractError(f"attend needs at least one encoder position, got shape {enc.shape}")
    if s_prev.shape != (p.W_s.shape[1],):
        raise DimensionError(f"decoder state {s_prev.shape} does not match W_s {p.W_s.shape}")
    if keys is None:
        keys = project_keys(enc, p)
    query = T.matmul(p.W_s, s_prev)
    scores = T.matmul(T.tanh_act(T.add(keys, query)), p.v)
    weights = T.softmax_axis(scores, 0)
    context = T.matmul(weights, enc)
    return AttentionOutput(weights, context, scores)


def attention_map(weights, rows: int, cols: int) -> np.ndarray:
    """Row-major rows x cols grid of the attention weights."""
    w = weights.data if isinstance(weights, Tensor) else np.asarray(weights, dtype=np.float64)
    if w.size != rows * cols:
        raise DimensionError(f"{w.size} weights cannot fill a {rows}x{cols} grid")
    return w.reshape(rows, cols).copy()
