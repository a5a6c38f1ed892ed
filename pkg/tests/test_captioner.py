import math

import numpy as np
import pytest

from attncap import tensor as T
from attncap.captioner import CaptionerParams, FeatureGrid, caption_nll, decode_step, encode, generate
from attncap.errors import ContractError, DimensionError
from attncap.gradcheck import check_gradients, model_cases
from attncap.text import END_ID, PAD_ID, START_ID


def mv(m, x):
    return [sum(a * b for a, b in zip(row, x)) for row in m]


def small_params(seed=0, K=5, D=3):
    return CaptionerParams.init(K, D, enc_dim=3, dec_dim=4, embed_dim=2, attn_dim=3, seed=seed)


def test_feature_grid_validation():
    with pytest.raises(DimensionError):
        FeatureGrid(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        FeatureGrid(np.full((1, 1, 2), np.nan))
    g = FeatureGrid(np.arange(12.0).reshape(2, 2, 3))
    np.testing.assert_array_equal(g.annotations()[3], [9, 10, 11])


def test_encode_zero_grid():
    p = small_params()
    enc, h0 = encode(np.zeros((2, 2, 3)), p)
    assert not enc.data.any() and not h0.h.data.any()


def test_encode_single_cell_and_hand_row():
    p = small_params(1)
    p.enc_b.data[:] = [0.1, -0.2, 0.3]
    p.init_b.data[:] = [0.05, 0, 0, -0.05]
    cell = np.array([[[0.5, -1.0, 2.0]]])
    enc, h0 = encode(cell, p)
    e1 = [max(0.0, v + b) for v, b in zip(mv(p.enc_w.data, cell[0, 0]), p.enc_b.data)]
    np.testing.assert_allclose(enc.data[0], e1, atol=1e-14)
    expected = [math.tanh(v + b) for v, b in zip(mv(p.init_w.data, e1), p.init_b.data)]
    np.testing.assert_allclose(h0.h.data, expected, atol=1e-14)
    grid = np.random.default_rng(0).random((2, 2, 3))
    enc, _ = encode(grid, p)
    row = [max(0.0, v + b) for v, b in zip(mv(p.enc_w.data, grid[1, 0]), p.enc_b.data)]
    np.testing.assert_allclose(enc.data[2], row, atol=1e-14)
    with pytest.raises(DimensionError):
        encode(np.zeros((2, 2, 4)), p)


def test_zero_params_uniform_next_word():
    p = CaptionerParams.zeros(7, 3, 3, 4, 2)
    enc, h0 = encode(np.ones((2, 2, 3)), p)
    step = decode_step(START_ID, h0, enc, p)
    np.testing.assert_allclose(np.exp(step.log_probs.data), 1 / 7, atol=1e-15)
    assert abs(step.attention.weights.data.sum() - 1) < 1e-12
    with pytest.raises(ContractError):
        decode_step(7, h0, enc, p)


def test_hand_decode_step():
    p = small_params(3)
    named = {k: t.data for k, t in p.named().items()}
    for k in named:
        named[k][...] = np.round(np.random.default_rng(len(k)).uniform(-0.5, 0.5, named[k].shape), 2)
    grid = np.array([[[0.2, 0.9, 0.0], [1.0, 0.3, 0.4]]])
    enc, h0 = encode(grid, p)
    got = decode_step(4, h0, enc, p)

    cells = [list(grid[0, 0]), list(grid[0, 1])]
    encs = [[max(0.0, a + b) for a, b in zip(mv(named["enc_proj.weight"], c), named["enc_proj.bias"])] for c in cells]
    mean = [(a + b) / 2 for a, b in zip(*encs)]
    s = [math.tanh(a + b) for a, b in zip(mv(named["init_proj.weight"], mean), named["init_proj.bias"])]
    q = mv(named["attn.W_s"], s)
    e = [sum(v * math.tanh(k + qq) for v, k, qq in zip(named["attn.v"], mv(named["attn.W_h"], h), q)) for h in encs]
    z = sum(math.exp(x) for x in e)
    alpha = [math.exp(x) / z for x in e]
    ctx = [alpha[0] * a + alpha[1] * b for a, b in zip(*encs)]
    x = list(named["embedding"][4]) + ctx

    def gate(W, U, b, h):
        return [1 / (1 + math.exp(-(u + w + bb))) for u, w, bb in zip(mv(W, x), mv(U, h), b)]

    zg = gate(named["gru.W_z"], named["gru.U_z"], named["gru.b_z"], s)
    rg = gate(named["gru.W_r"], named["gru.U_r"], named["gru.b_r"], s)
    uh = mv(named["gru.U"], s)
    cand = [math.tanh(w + r * u + b) for w, r, u, b in zip(mv(named["gru.W"], x), rg, uh, named["gru.b_h"])]
    h1 = [zz * c + (1 - zz) * hp for zz, c, hp in zip(zg, cand, s)]
    logits = [a + b for a, b in zip(mv(named["out_proj.weight"], h1), named["out_proj.bias"])]
    np.testing.assert_allclose(got.attention.weights.data, alpha, rtol=0, atol=1e-12)
    np.testing.assert_allclose(got.logits.data, logits, rtol=0, atol=1e-10)
    lse = math.log(sum(math.exp(v) for v in logits))
    np.testing.assert_allclose(got.log_probs.data, [v - lse for v in logits], rtol=0, atol=1e-10)


def test_zero_params_loss_is_length_times_log_k():
    K = 9
    p = CaptionerParams.zeros(K, 3, 3, 4, 2)
    for L in (1, 2, 5, 11):
        target = [START_ID] + [5] * (L - 1) + [END_ID]
        loss = caption_nll(np.ones((2, 2, 3)), target, p).item()
        sequential = 0.0
        for _ in range(L):
            sequential += math.log(K)
        assert loss == sequential
        assert math.isclose(loss, L * math.log(K), rel_tol=4e-16)


def test_padding_is_masked():
    p = small_params(2)
    grid = np.random.default_rng(1).random((2, 2, 3))
    a = caption_nll(grid, [START_ID, 4, 3, END_ID], p).item()
    b = caption_nll(grid, [START_ID, 4, 3, END_ID, PAD_ID, PAD_ID], p).item()
    assert a == b
    with pytest.raises(ContractError):
        caption_nll(grid, [4, 3, END_ID], p)


def test_output_bias_shift_invariance():
    p = small_params(4)
    grid = np.random.default_rng(2).random((2, 2, 3))
    target = [START_ID, 3, 4, 3, END_ID]
    before = caption_nll(grid, target, p).item()
    p.out_b.data += 7.25
    assert abs(caption_nll(grid, target, p).item() - before) < 1e-10


def test_nll_equals_manual_step_sum_bitwise():
    rng = np.random.default_rng(5)
    for seed in range(10):
        p = small_params(seed)
        grid = rng.random((2, 2, 3))
        target = [START_ID, *rng.integers(3, 5, rng.integers(1, 6)), END_ID]
        enc, state = encode(grid, p)
        total = None
        for prev, gold in zip(target[:-1], target[1:]):
            step = decode_step(int(prev), state, enc, p)
            state = step.state
            term = -step.log_probs.data[gold]
            total = term if total is None else total + term
        assert caption_nll(grid, target, p).item() == total


def test_gradcheck_full_model():
    fn, tensors, ref = model_cases(np.random.default_rng(0))["captioner"]
    assert len(tensors) == 19
    assert max(check_gradients(fn, tensors, reference=ref).values()) < 1e-4


def test_generate_zero_params_emits_pad():
    p = CaptionerParams.zeros(6, 3, 3, 4, 2)
    tokens, alphas = generate(np.ones((2, 2, 3)), p, max_len=7)
    assert tokens == [PAD_ID] * 7
    assert len(alphas) == 7
    with pytest.raises(ContractError):
        generate(np.ones((2, 2, 3)), p, max_len=0)


def test_generate_deterministic_and_simplex():
    p = small_params(6)
    grid = np.random.default_rng(3).random((2, 2, 3))
    a_tokens, a_alphas = generate(grid, p, 10)
    b_tokens, b_alphas = generate(grid, p, 10)
    assert a_tokens == b_tokens and len(a_alphas) == len(a_tokens)
    for a, b in zip(a_alphas, b_alphas):
        assert a.tobytes() == b.tobytes()
        assert np.all(a >= 0) and abs(a.sum() - 1) < 1e-9
    assert T.grad_enabled()


def test_next_word_distributions_valid():
    p = small_params(7)
    grid = np.random.default_rng(4).random((2, 2, 3))
    enc, state = encode(grid, p)
    prev = START_ID
    for _ in range(6):
        step = decode_step(prev, state, enc, p)
        assert abs(np.exp(step.log_probs.data).sum() - 1) < 1e-9
        state, prev = step.state, int(np.argmax(step.logits.data))


def test_named_round_trip_and_warm_start():
    p = small_params(8)
    q = CaptionerParams.from_named({k: t.data.copy() for k, t in p.named().items()})
    for k, t in p.named().items():
        assert q.named()[k].data.tobytes() == t.data.tobytes()
    table = np.arange(10.0).reshape(5, 2)
    warm = CaptionerParams.init(5, 3, 3, 4, 2, seed=0, embedding=table)
    np.testing.assert_array_equal(warm.embedding.data, table)
    with pytest.raises(DimensionError):
        CaptionerParams.init(5, 3, 3, 4, 2, seed=0, embedding=np.zeros((4, 2)))
