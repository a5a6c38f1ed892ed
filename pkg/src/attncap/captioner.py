"""Encoder projection, attentive GRU decoder, caption likelihood and greedy decoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as T
from .attention import AttentionOutput, AttentionParams, attend, project_keys
from .errors import ContractError, DimensionError
from .gru import GruParams, GruState, gru_step
from .tensor import Tensor
from .text import END_ID, PAD_ID, START_ID, check_caption

# Extents of the convolutional grids produced by common ImageNet backbones.
BACKBONE_GRIDS = {
    "inception_v3": (8, 8, 2048),
    "densenet169": (7, 7, 1664),
    "resnet101": (7, 7, 2048),
    "vgg16": (7, 7, 512),
}


@dataclass(frozen=True)
class FeatureGrid:
    """H x W x D activations; row-major positions become the annotation vectors."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DimensionError(f"feature grid must be H x W x D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ContractError("feature grid contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.values.shape[2]

    def annotations(self) -> np.ndarray:
        return self.values.reshape(-1, self.depth)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def _zeros(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)


@dataclass
class CaptionerParams:
    enc_w: Tensor
    enc_b: Tensor
    init_w: Tensor
    init_b: Tensor
    embedding: Tensor
    gru: GruParams
    attn: AttentionParams
    out_w: Tensor
    out_b: Tensor

    def __post_init__(self):
        enc_dim, feat = self.enc_w.shape
        dec_dim = self.init_w.shape[0]
        k, e = self.embedding.shape
        expected = {
            "enc_b": (self.enc_b.shape, (enc_dim,)),
            "init_w": (self.init_w.shape, (dec_dim, enc_dim)),
            "init_b": (self.init_b.shape, (dec_dim,)),
            "gru.W_z": (self.gru.W_z.shape, (dec_dim, e + enc_dim)),
            "attn.W_s": (self.attn.W_s.shape, (self.attn.attn_dim, dec_dim)),
            "attn.W_h": (self.attn.W_h.shape, (self.attn.attn_dim, enc_dim)),
            "out_w": (self.out_w.shape, (k, dec_dim)),
            "out_b": (self.out_b.shape, (k,)),
        }
        for name, (got, want) in expected.items():
            if got != want:
                raise DimensionError(f"{name} has shape {got}, expected {want}")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.enc_w.shape[1]

    @property
    def dims(self) -> dict[str, int]:
        return {
            "vocab_size": self.vocab_size,
            "feature_dim": self.feature_dim,
            "enc_dim": self.enc_w.shape[0],
            "dec_dim": self.init_w.shape[0],
            "embed_dim": self.embedding.shape[1],
            "attn_dim": self.attn.attn_dim,
        }

    def named(self) -> dict[str, Tensor]:
        out = {
            "enc_proj.weight": self.enc_w,
            "enc_proj.bias": self.enc_b,
            "init_proj.weight": self.init_w,
            "init_proj.bias": self.init_b,
            "embedding": self.embedding,
        }
        out.update({f"gru.{k}": v for k, v in self.gru.named().items()})
        out.update({f"attn.{k}": v for k, v in self.attn.named().items()})
        out["out_proj.weight"] = self.out_w
        out["out_proj.bias"] = self.out_b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named().values())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()

    @classmethod
    def from_named(cls, blocks: dict[str, np.ndarray]) -> "CaptionerParams":
        def t(name):
            if name not in blocks:
                raise ContractError(f"missing parameter block {name!r}")
            return Tensor(blocks[name], requires_grad=True)

        return cls(
            t("enc_proj.weight"), t("enc_proj.bias"),
            t("init_proj.weight"), t("init_proj.bias"),
            t("embedding"),
            GruParams(**{k: t(f"gru.{k}") for k in ("W_z", "W_r", "W", "U_z", "U_r", "U", "b_z", "b_r", "b_h")}),
            AttentionParams(t("attn.W_s"), t("attn.W_h"), t("attn.v")),
            t("out_proj.weight"), t("out_proj.bias"),
        )

    @classmethod
    def init(
        cls,
        vocab_size: int,
        feature_dim: int,
        enc_dim: int,
        dec_dim: int,
        embed_dim: int,
        attn_dim: int | None = None,
        seed: int = 0,
        embedding: np.ndarray | None = None,
    ) -> "CaptionerParams":
        """Random initialization; biases start at zero.

        ``embedding`` optionally warm-starts the word table (K x E).
        """
        attn_dim = attn_dim or dec_dim
        rng = np.random.default_rng(seed)
        enc_w = _uniform(rng, feature_dim, (enc_dim, feature_dim))
        init_w = _uniform(rng, enc_dim, (dec_dim, enc_dim))
        bound = 0.5 / embed_dim
        emb = Tensor(rng.uniform(-bound, bound, (vocab_size, embed_dim)), requires_grad=True)
        if embedding is not None:
            if embedding.shape != (vocab_size, embed_dim):
                raise DimensionError(
                    f"embedding table {embedding.shape} does not match {(vocab_size, embed_dim)}"
                )
            emb = Tensor(embedding, requires_grad=True)
        gru = GruParams.init(embed_dim + enc_dim, dec_dim, rng)
        attn = AttentionParams.init(dec_dim, enc_dim, attn_dim, rng)
        out_w = _uniform(rng, dec_dim, (vocab_size, dec_dim))
        return cls(
            enc_w, _zeros(enc_dim), init_w, _zeros(dec_dim), emb, gru, attn, out_w, _zeros(vocab_size)
        )

    @classmethod
    def zeros(
        cls, vocab_size: int, feature_dim: int, enc_dim: int, dec_dim: int, embed_dim: int,
        attn_dim: int | None = None,
    ) -> "CaptionerParams":
        attn_dim = attn_dim or dec_dim
        return cls(
            _zeros(enc_dim, feature_dim), _zeros(enc_dim),
            _zeros(dec_dim, enc_dim), _zeros(dec_dim),
            _zeros(vocab_size, embed_dim),
            GruParams.zeros(embed_dim + enc_dim, dec_dim),
            AttentionParams.zeros(dec_dim, enc_dim, attn_dim),
            _zeros(vocab_size, dec_dim), _zeros(vocab_size),
        )


class DecodeStep(NamedTuple):
    logits: Tensor
    log_probs: Tensor
    state: GruState
    attention: AttentionOutput


def _grid_values(grid) -> np.ndarray:
    if isinstance(grid, FeatureGrid):
        return grid.annotations()
    return FeatureGrid(grid).annotations()


def encode(grid, p: CaptionerParams) -> tuple[Tensor, GruState]:
    """Project every grid position and derive the decoder's initial state.

    Returns (T x enc_dim annotation matrix, h0).
    """
    rows = _grid_values(grid)
    if rows.shape[1] != p.feature_dim:
        raise DimensionError(f"grid depth {rows.shape[1]} does not match encoder input {p.feature_dim}")
    feats = Tensor._wrap(rows, False)
    enc = T.relu(T.add(T.matmul(feats, T.transpose(p.enc_w)), p.enc_b))
    h0 = T.tanh_act(T.add(T.matmul(p.init_w, T.mean_axis(enc, 0)), p.init_b))
    return enc, GruState(h0)


def decode_step(
    y_prev: int, s_prev: GruState, enc: Tensor, p: CaptionerParams, keys: Tensor | None = None
) -> DecodeStep:
    if not 0 <= y_prev < p.vocab_size:
        raise ContractError(f"previous word {y_prev} out of range [0, {p.vocab_size})")
    att = attend(s_prev.h, enc, p.attn, keys)
    x = T.concat([T.take(p.embedding, y_prev), att.context], 0)
    state = gru_step(x, s_prev, p.gru)
    logits = T.add(T.matmul(p.out_w, state.h), p.out_b)
    return DecodeStep(logits, T.log_softmax_axis(logits, 0), state, att)


def caption_nll(grid, target: Sequence[int], p: CaptionerParams) -> Tensor:
    """Teacher-forced negative log-likelihood of ``target``, summed over steps.

    ``target`` is ``<start> ... <end>`` optionally followed by ``<pad>``; padded
    positions are skipped. Step losses are added in order.
    """
    target = [int(t) for t in target]
    check_caption(target, p.vocab_size)
    enc, state = encode(grid, p)
    keys = project_keys(enc, p.attn)
    loss = None
    for prev, gold in zip(target[:-1], target[1:]):
        if gold == PAD_ID:
            break
        step = decode_step(prev, state, enc, p, keys)
        state = step.state
        nll = T.scale(T.pick(step.log_probs, gold), -1.0)
        loss = nll if loss is None else T.add(loss, nll)
    return loss


def generate(grid, p: CaptionerParams, max_len: int = 20) -> tuple[list[int], list[np.ndarray]]:
    """Greedy decoding from ``<start>``.

    Returns the emitted indices (ending in ``<end>`` if it was produced within
    ``max_len`` steps) and the attention weights used at each step.
    """
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    tokens: list[int] = []
    alphas: list[np.ndarray] = []
    with T.no_grad():
        enc, state = encode(grid, p)
        keys = project_keys(enc, p.attn)
        prev = START_ID
        for _ in range(max_len):
            step = decode_step(prev, state, enc, p, keys)
            state = step.state
            prev = int(np.argmax(step.logits.data))
            tokens.append(prev)
            alphas.append(step.attention.weights.data.copy())
            if prev == END_ID:
                break
    return tokens, alphas
