"""Gated recurrent unit with the update gate weighting the candidate state.

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    c = tanh(W x + r * (U h) + b_h)
    h' = z * c + (1 - z) * h

Note the last line: ``z`` multiplies the candidate, not the carried state.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


@dataclass
class GruParams:
    W_z: Tensor
    W_r: Tensor
    W: Tensor
    U_z: Tensor
    U_r: Tensor
    U: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    def __post_init__(self):
        h, i = self.W_z.shape
        for name in ("W_z", "W_r", "W"):
            if getattr(self, name).shape != (h, i):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(h, i)}")
        for name in ("U_z", "U_r", "U"):
            if getattr(self, name).shape != (h, h):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(h, h)}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (h,):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(h,)}")

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "GruParams":
        bound = 1.0 / np.sqrt(hidden_size)

        def mat(cols):
            return Tensor(rng.uniform(-bound, bound, (hidden_size, cols)), requires_grad=True)

        def vec():
            return Tensor(np.zeros(hidden_size), requires_grad=True)

        return cls(
            mat(input_size), mat(input_size), mat(input_size),
            mat(hidden_size), mat(hidden_size), mat(hidden_size),
            vec(), vec(), vec(),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruParams":
        def z(*shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        h, i = hidden_size, input_size
        return cls(z(h, i), z(h, i), z(h, i), z(h, h), z(h, h), z(h, h), z(h), z(h), z(h))


@dataclass
class GruState:
    """Hidden state ``h`` plus the gate values that produced it (None for h0)."""

    h: Tensor
    z: Tensor | None = None
    r: Tensor | None = None
    candidate: Tensor | None = None


def gru_step(x: Tensor, prev: GruState, p: GruParams) -> GruState:
    if x.shape != (p.input_size,):
        raise DimensionError(f"gru input has shape {x.shape}, expected {(p.input_size,)}")
    h = prev.h
    if h.shape != (p.hidden_size,):
        raise DimensionError(f"gru state has shape {h.shape}, expected {(p.hidden_size,)}")
    z = T.sigmoid(T.matmul(p.W_z, x) + T.matmul(p.U_z, h) + p.b_z)
    r = T.sigmoid(T.matmul(p.W_r, x) + T.matmul(p.U_r, h) + p.b_r)
    cand = T.tanh_act(T.matmul(p.W, x) + T.hadamard(r, T.matmul(p.U, h)) + p.b_h)
    h_new = T.hadamard(z, cand) + T.hadamard(1.0 - z, h)
    return GruState(h_new, z, r, cand)


def gru_sequence(xs: Sequence[Tensor], h0: GruState, p: GruParams) -> list[GruState]:
    states = []
    state = h0
    for x in xs:
        state = gru_step(x, state, p)
        states.append(state)
    return states
