"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import reference as ref
from .tensor import Tensor, backward, no_grad

DENOM_FLOOR = 1e-8


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn() / d t by central differences, perturbing ``t.data`` in place."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = fn().item()
            flat[i] = orig - h
            minus = fn().item()
            flat[i] = orig
            out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a| + |n|, 1e-8), elementwise."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    reference: Callable | None = None,
) -> dict[int, float]:
    """Compare backprop against finite differences for every tensor.

    Without ``reference`` the differences are taken on ``fn`` itself in
    float64. With it, ``reference(*arrays)`` (one array per tensor) is
    differenced in extended precision instead.

    Returns the max relative error per tensor position in ``tensors``.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn()
    backward(loss)
    errors = {}
    arrays = [t.data for t in tensors]
    for i, t in enumerate(tensors):
        analytic = t.grad.copy()
        if reference is None:
            numeric = numerical_grad(fn, t, h)
        else:
            numeric = ref.numerical_grad(reference, arrays, i, h)
        errors[i] = relative_error(analytic, numeric)
    return errors


def _rand(rng, *shape, low=-2.0, high=2.0):
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Scalar-valued probes through every differentiable tensor operation."""
    from . import tensor as T

    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    m, v = _rand(rng, 2, 3), _rand(rng, 3)
    p, q = _rand(rng, 2, 3), _rand(rng, 2, 3)
    x = _rand(rng, 4)
    w = _rand(rng, 3, 4)
    c1, c2 = _rand(rng, 2), _rand(rng, 3)
    table = _rand(rng, 5, 3)
    weights = Tensor(rng.uniform(-1, 1, (3, 4)))
    return {
        "matmul": (lambda: T.tsum(T.hadamard(T.matmul(a, b), T.matmul(a, b))), [a, b]),
        "matmul_vec": (lambda: T.tsum(T.tanh_act(T.matmul(w, x))), [w, x]),
        "transpose": (lambda: T.tsum(T.hadamard(T.transpose(a), T.transpose(a))), [a]),
        "add_bias": (lambda: T.tsum(T.tanh_act(T.add(m, v))), [m, v]),
        "sub": (lambda: T.tsum(T.tanh_act(T.sub(p, q))), [p, q]),
        "hadamard": (lambda: T.tsum(T.hadamard(T.hadamard(p, q), p)), [p, q]),
        "scale": (lambda: T.tsum(T.tanh_act(T.scale(p, 1.7))), [p]),
        "sigmoid": (lambda: T.tsum(T.hadamard(T.sigmoid(p), q)), [p, q]),
        "tanh": (lambda: T.tsum(T.hadamard(T.tanh_act(p), q)), [p, q]),
        "relu": (lambda: T.tsum(T.hadamard(T.relu(p), q)), [p, q]),
        "softmax": (lambda: T.tsum(T.hadamard(T.softmax_axis(a, 1), Tensor(weights.data))), [a]),
        "softmax_axis0": (lambda: T.tsum(T.hadamard(T.softmax_axis(a, 0), Tensor(weights.data))), [a]),
        "log_softmax": (lambda: T.tsum(T.hadamard(T.log_softmax_axis(a, 1), Tensor(weights.data))), [a]),
        "concat": (lambda: T.tsum(T.tanh_act(T.concat([c1, c2], 0))), [c1, c2]),
        "take": (lambda: T.tsum(T.tanh_act(T.take(table, [0, 3, 3]))), [table]),
        "pick": (lambda: T.tsum(T.tanh_act(T.pick(T.log_softmax_axis(a, 1), [0, 1, 3]))), [a]),
        "mean_axis": (lambda: T.tsum(T.tanh_act(T.mean_axis(a, 0))), [a]),
        "reshape": (lambda: T.tsum(T.tanh_act(T.reshape(a, (6, 2)))), [a]),
    }


def _fill(named: dict[str, Tensor], rng: np.random.Generator) -> None:
    for t in named.values():
        t.data[...] = rng.uniform(-2.0, 2.0, t.shape)


def tiny_captioner(rng: np.random.Generator):
    """A K=5 model over a 2x2x3 grid; every parameter and input uniform on [-2, 2]."""
    from .captioner import CaptionerParams

    p = CaptionerParams.zeros(vocab_size=5, feature_dim=3, enc_dim=3, dec_dim=4, embed_dim=2, attn_dim=3)
    _fill(p.named(), rng)
    grid = rng.uniform(-2.0, 2.0, (2, 2, 3))
    return p, grid, [1, 4, 3, 2]


def model_cases(rng: np.random.Generator) -> dict[str, tuple]:
    """Composed probes, each with a tape-free extended-precision twin."""
    from . import tensor as T
    from .attention import attend
    from .captioner import caption_nll
    from .gru import GruParams, GruState, gru_sequence

    gp = GruParams.zeros(3, 4)
    _fill(gp.named(), rng)
    xs = [_rand(rng, 3) for _ in range(4)]
    h0 = _rand(rng, 4)

    weights = np.arange(1.0, 5.0)
    gru_names = list(gp.named())

    def gru_probe():
        states = gru_sequence(xs, GruState(h0), gp)
        return T.tsum(T.hadamard(states[-1].h, Tensor(weights)))

    def gru_ref(*arrays):
        p = dict(zip(gru_names, arrays[:9]))
        h = arrays[-1]
        for x in arrays[9:-1]:
            h = ref.gru_step(x, h, p)
        return (h * weights.astype(ref.EXTENDED)).sum()

    from .attention import AttentionParams

    ap = AttentionParams.zeros(dec_dim=4, enc_dim=3, attn_dim=5)
    _fill(ap.named(), rng)
    s, enc = _rand(rng, 4), _rand(rng, 6, 3)
    probe = Tensor(rng.uniform(-1, 1, 3))

    def attend_probe():
        out = attend(s, enc, ap)
        return T.add(T.tsum(T.hadamard(out.context, probe)), T.pick(out.weights, 2))

    def attend_ref(W_s, W_h, v, s_, enc_):
        alpha, ctx = ref.attend(s_, enc_, {"W_s": W_s, "W_h": W_h, "v": v})
        return (ctx * probe.data.astype(ref.EXTENDED)).sum() + alpha[2]

    cp, grid, target = tiny_captioner(rng)
    names = list(cp.named())
    grid_ext = grid.astype(ref.EXTENDED)

    def captioner_ref(*arrays):
        return ref.caption_nll(grid_ext, target, dict(zip(names, arrays)))

    return {
        "gru_unroll": (gru_probe, list(gp.named().values()) + xs + [h0], gru_ref),
        "attend": (attend_probe, list(ap.named().values()) + [s, enc], attend_ref),
        "captioner": (lambda: caption_nll(grid, target, cp), cp.parameters(), captioner_ref),
    }


def run_suite(seed: int) -> dict[str, float]:
    """Max relative error per probe for one seed."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, (fn, tensors) in op_cases(rng).items():
        results[name] = max(check_gradients(fn, tensors).values())
    for name, (fn, tensors, reference) in model_cases(rng).items():
        results[name] = max(check_gradients(fn, tensors, reference=reference).values())
    return results
