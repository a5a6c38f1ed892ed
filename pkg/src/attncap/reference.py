"""Tape-free forward passes for the GRU, attention and captioner.

Plain numpy, parameterized by dtype. Finite-difference checks evaluate these in
extended precision (``np.longdouble``) so that roundoff in the loss does not
swamp gradients of order 1e-8. Nothing here shares code with the tape path.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

EXTENDED = np.longdouble


def _sig(x):
    return 1 / (1 + np.exp(-x))


def gru_step(x, h, p: Mapping[str, np.ndarray]):
    z = _sig(p["W_z"] @ x + p["U_z"] @ h + p["b_z"])
    r = _sig(p["W_r"] @ x + p["U_r"] @ h + p["b_r"])
    cand = np.tanh(p["W"] @ x + r * (p["U"] @ h) + p["b_h"])
    return z * cand + (1 - z) * h


def attend(s, enc, p: Mapping[str, np.ndarray]):
    scores = np.array([p["v"] @ np.tanh(p["W_s"] @ s + p["W_h"] @ row) for row in enc])
    e = np.exp(scores - scores.max())
    alpha = e / e.sum()
    return alpha, (alpha[:, None] * enc).sum(axis=0)


def caption_nll(grid, target: Sequence[int], p: Mapping[str, np.ndarray]):
    """Same quantity as captioner.caption_nll, from the named parameter blocks."""
    g = lambda prefix: {k[len(prefix):]: v for k, v in p.items() if k.startswith(prefix)}  # noqa: E731
    rows = grid.reshape(-1, grid.shape[-1])
    enc = np.maximum(rows @ p["enc_proj.weight"].T + p["enc_proj.bias"], 0)
    h = np.tanh(p["init_proj.weight"] @ enc.mean(axis=0) + p["init_proj.bias"])
    gru, attn = g("gru."), g("attn.")
    total = 0
    for prev, gold in zip(target[:-1], target[1:]):
        if gold == 0:
            break
        _, ctx = attend(h, enc, attn)
        h = gru_step(np.concatenate([p["embedding"][prev], ctx]), h, gru)
        logits = p["out_proj.weight"] @ h + p["out_proj.bias"]
        m = logits.max()
        total = total - (logits[gold] - m - np.log(np.exp(logits - m).sum()))
    return total


def numerical_grad(fn, arrays: list[np.ndarray], which: int, h: float = 1e-5, dtype=EXTENDED):
    """Central differences of ``fn(*arrays)`` w.r.t. ``arrays[which]`` in ``dtype``."""
    args = [np.array(a, dtype=dtype) for a in arrays]
    target = args[which]
    flat = target.reshape(-1)
    grad = np.zeros(flat.size, dtype=dtype)
    step = dtype(h)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = fn(*args)
        flat[i] = orig - step
        minus = fn(*args)
        flat[i] = orig
        grad[i] = (plus - minus) / (2 * step)
    return grad.reshape(target.shape).astype(np.float64)
