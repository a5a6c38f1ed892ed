"""Adam optimization and the teacher-forced training loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .captioner import CaptionerParams, FeatureGrid, caption_nll
from .errors import ContractError, NumericError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    max_caption_len: int = 20
    enc_dim: int = 32
    dec_dim: int = 64
    embed_dim: int = 32
    attn_dim: int | None = None
    grad_clip: float | None = None
    min_count: int = 1
    embeddings: str | None = None

    def __post_init__(self):
        for name in ("lr", "eps", "batch_size", "epochs", "max_caption_len", "enc_dim",
                     "dec_dim", "embed_dim", "min_count"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.attn_dim is not None and self.attn_dim <= 0:
            raise ContractError(f"attn_dim must be positive, got {self.attn_dim}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ContractError(f"grad_clip must be positive, got {self.grad_clip}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ContractError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ContractError("config must be a JSON object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def to_blocks(self) -> dict[str, np.ndarray]:
        blocks = {"adam.step": np.array(float(self.step))}
        blocks.update({f"adam.m.{k}": a for k, a in self.m.items()})
        blocks.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return blocks

    @classmethod
    def from_blocks(cls, blocks: Mapping[str, np.ndarray]) -> "AdamState":
        if "adam.step" not in blocks:
            return cls()
        return cls(
            {k[7:]: a.copy() for k, a in blocks.items() if k.startswith("adam.m.")},
            {k[7:]: a.copy() for k, a in blocks.items() if k.startswith("adam.v.")},
            int(blocks["adam.step"]),
        )


def _named(params) -> Mapping[str, Tensor]:
    return params.named() if hasattr(params, "named") else params


def global_grad_norm(params) -> float:
    return math.sqrt(sum(float(np.sum(t.grad * t.grad)) for t in _named(params).values()))


def adam_step(params, state: AdamState, cfg: TrainConfig) -> None:
    """Apply one bias-corrected Adam update from the accumulated gradients.

    With ``cfg.grad_clip`` set, gradients are first rescaled so their global
    L2 norm does not exceed it. Gradients are zeroed afterwards.
    """
    named = _named(params)
    factor = 1.0
    if cfg.grad_clip is not None:
        norm = global_grad_norm(named)
        if norm > cfg.grad_clip:
            factor = cfg.grad_clip / norm
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, p in named.items():
        g = p.grad * factor if factor != 1.0 else p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.zero_grad()


def mean_loss(params: CaptionerParams, examples: Sequence[tuple[FeatureGrid, list[int]]]) -> float:
    with T.no_grad():
        return math.fsum(caption_nll(g, c, params).item() for g, c in examples) / len(examples)


def run_epochs(
    params: CaptionerParams,
    examples: Sequence[tuple[FeatureGrid, list[int]]],
    cfg: TrainConfig,
    state: AdamState,
    start_epoch: int = 0,
    on_epoch: Callable[[int, float], None] | None = None,
) -> list[float]:
    """Train epochs ``start_epoch + 1 .. cfg.epochs``; returns their mean losses.

    Each epoch visits the examples in a permutation seeded by (seed, epoch), so
    a run resumed after epoch k replays exactly the batches of an
    uninterrupted one.
    """
    if not examples:
        raise ContractError("no training examples")
    losses = []
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(examples))
        epoch_losses = []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[start:start + cfg.batch_size]
            for i in batch:
                grid, tokens = examples[i]
                loss = caption_nll(grid, tokens, params)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(f"non-finite loss in epoch {epoch}, batch {b}")
                epoch_losses.append(value)
                T.backward(T.scale(loss, 1.0 / len(batch)))
            adam_step(params, state, cfg)
        mean = math.fsum(epoch_losses) / len(epoch_losses)
        losses.append(mean)
        logger.info("epoch %d mean loss %.6f", epoch, mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return losses
