import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_difference, max_abs_error, max_relative_error, reference_lstm_step
from stepseq.adam import AdamState, adam_step
from stepseq.seqnet import (
    ModelSpec,
    ShapeError,
    StaleCacheError,
    backward,
    check_params,
    cross_entropy,
    forward,
    gate_weights,
    init_params,
    load_checkpoint,
    lstm_cell,
    loss_and_grads,
    rnn_cell,
    save_checkpoint,
    softmax,
)


def random_model(rng, max_T=5, max_hidden=8, max_layers=2):
    spec = ModelSpec(
        input_dim=int(rng.integers(1, 6)),
        embed_dim=int(rng.integers(1, 7)),
        hidden_dim=int(rng.integers(1, max_hidden + 1)),
        num_lstm_layers=int(rng.integers(1, max_layers + 1)),
        head_dims=tuple(int(w) for w in rng.integers(1, 7, size=int(rng.integers(0, 3)))),
        num_classes=int(rng.integers(2, 5)),
        dropout_rate=float(rng.choice([0.0, 0.3])),
    )
    params = init_params(spec, int(rng.integers(1 << 30)))
    for k in params:  # move off the symmetric init so biases and gates matter
        params[k] += rng.normal(scale=0.3, size=params[k].shape)
    x = rng.normal(size=(int(rng.integers(1, max_T + 1)), spec.input_dim))
    y = int(rng.integers(spec.num_classes))
    return spec, params, x, y


def gradcheck(spec, params, x, y, dropout_seed=None):
    make_rng = (lambda: np.random.default_rng(dropout_seed)) if dropout_seed is not None else (lambda: None)
    _, analytic = loss_and_grads(x, y, spec, params, make_rng())
    numeric = central_difference(lambda: cross_entropy(forward(x, spec, params, make_rng())[0], y), params)
    assert set(analytic) == set(numeric)
    assert max_abs_error(analytic, numeric) < 1e-8
    return max_relative_error(analytic, numeric)


# -- cells ---------------------------------------------------------------------


def test_rnn_cell():
    out = rnn_cell(np.ones(3), np.zeros(4), np.zeros((3, 4)), np.zeros((4, 4)), np.zeros(4))
    assert np.all(out == 0.5)
    assert rnn_cell([1.0], [0.0], [[1.0]], [[1.0]], 0.0)[0] == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-14)
    rng = np.random.default_rng(0)
    out = rnn_cell(rng.normal(size=3), rng.normal(size=2), rng.normal(size=(3, 2)) * 5, rng.normal(size=(2, 2)), rng.normal(size=2))
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ShapeError):
        rnn_cell(np.ones(3), np.zeros(4), np.zeros((2, 4)), np.zeros((4, 4)), np.zeros(4))


def test_lstm_cell_zero_params():
    H, I = 3, 2
    h, c = lstm_cell(np.ones(I), np.zeros(H), np.zeros(H), np.zeros((4 * H, H + I)), np.zeros(4 * H))
    assert np.all(h == 0) and np.all(c == 0)
    h, c = lstm_cell([0.7], [0.0], [1.0], np.zeros((4, 2)), np.zeros(4))
    assert c[0] == 0.5
    assert h[0] == pytest.approx(0.5 * math.tanh(0.5), rel=1e-14)
    assert h[0] == pytest.approx(0.231059, abs=1e-6)


def test_lstm_cell_matches_gatewise_reference():
    rng = np.random.default_rng(1)
    H, I = 4, 3
    W, b = rng.normal(size=(4 * H, H + I)), rng.normal(size=4 * H)
    x, h0, c0 = rng.normal(size=I), rng.normal(size=H), rng.normal(size=H)
    g = gate_weights(W, b)
    ref = reference_lstm_step(x, h0, c0, g["f"][0], g["i"][0], g["C"][0], g["o"][0], g["f"][1], g["i"][1], g["C"][1], g["o"][1])
    got = lstm_cell(x, h0, c0, W, b)
    np.testing.assert_allclose(got[0], ref[0], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(got[1], ref[1], rtol=1e-13, atol=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(0.1, 5))
def test_lstm_cell_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    H, I = 5, 3
    h, c = lstm_cell(rng.normal(size=I) * scale, rng.uniform(-1, 1, H), rng.normal(size=H) * scale,
                     rng.normal(size=(4 * H, H + I)), rng.normal(size=4 * H))
    assert np.all(np.abs(h) < 1)
    assert np.all(np.isfinite(c))


def test_lstm_cell_errors():
    with pytest.raises(ShapeError):
        lstm_cell(np.ones(2), np.zeros(3), np.zeros(3), np.zeros((12, 4)), np.zeros(12))
    with pytest.raises(ValueError, match="non_finite"):
        lstm_cell(np.array([np.nan, 0]), np.zeros(3), np.zeros(3), np.zeros((12, 5)), np.zeros(12))


# -- forward / loss --------------------------------------------------------------


def test_zero_head_gives_uniform_softmax():
    spec = ModelSpec(4, 3, 5, 2, (6,), 7, 0.3)
    p = init_params(spec, 0)
    p["out.W"][:] = 0
    logits, _ = forward(np.ones((3, 4)), spec, p)
    assert np.all(logits == 0)
    np.testing.assert_allclose(softmax(logits), 1 / 7)


def test_eval_forward_is_pure():
    spec = ModelSpec(4, 3, 5, 2, (6,), 3, 0.5)
    p = init_params(spec, 0)
    x = np.random.default_rng(0).normal(size=(6, 4))
    a, _ = forward(x, spec, p)
    b, _ = forward(x, spec, p)
    assert np.array_equal(a, b)


def test_single_timestep_reduces_to_cell_plus_head():
    spec = ModelSpec(3, 4, 5, 1, (), 3, 0.0)
    p = init_params(spec, 2)
    x = np.random.default_rng(1).normal(size=(1, 3))
    e = p["embed.W"] @ x[0] + p["embed.b"]
    h, _ = lstm_cell(e, np.zeros(5), np.zeros(5), p["lstm0.W"], p["lstm0.b"])
    logits, _ = forward(x, spec, p)
    np.testing.assert_allclose(logits, p["out.W"] @ h + p["out.b"], rtol=1e-13, atol=1e-15)


def test_forward_errors():
    spec = ModelSpec(3, 4, 5)
    p = init_params(spec, 0)
    with pytest.raises(ShapeError):
        forward(np.ones((2, 4)), spec, p)
    with pytest.raises(ValueError, match="empty_sequence"):
        forward(np.ones((0, 3)), spec, p)


def test_dropout_only_in_training_mode():
    spec = ModelSpec(3, 4, 5, 1, (16,), 3, 0.5)
    p = init_params(spec, 0)
    x = np.ones((4, 3))
    _, cache = forward(x, spec, p, np.random.default_rng(0))
    mask = cache.masks[0]
    assert set(np.unique(mask)) <= {0.0, 2.0}
    _, cache = forward(x, spec, p)
    assert cache.masks[0] is None


def test_cross_entropy_examples():
    assert cross_entropy(np.zeros(10), 3) == pytest.approx(math.log(10), rel=1e-14)
    assert cross_entropy(np.array([1000.0, 0.0]), 0) == pytest.approx(0.0, abs=1e-300)
    expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    assert cross_entropy(np.array([1.0, 2.0, 3.0]), 2) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.407606, abs=1e-6)
    with pytest.raises(IndexError, match="label_out_of_range"):
        cross_entropy(np.zeros(3), 3)


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=12), st.data())
def test_softmax_normalized_and_loss_nonnegative(values, data):
    z = np.array(values)
    assert softmax(z).sum() == pytest.approx(1.0, abs=1e-12)
    label = data.draw(st.integers(0, len(values) - 1))
    assert cross_entropy(z, label) >= 0.0


# -- backward -------------------------------------------------------------------


def test_gradcheck_small_batch_of_models():
    rng = np.random.default_rng(2024)
    for _ in range(15):
        spec, p, x, y = random_model(rng)
        seed = int(rng.integers(1000)) if spec.dropout_rate else None
        assert gradcheck(spec, p, x, y, seed) <= 1e-4


def test_head_bias_gradient_vanishes_at_confident_label():
    spec = ModelSpec(2, 2, 3, 1, (), 2, 0.0)
    p = init_params(spec, 0)
    p["out.b"][:] = [60.0, -60.0]
    _, g = loss_and_grads(np.ones((3, 2)), 0, spec, p)
    assert np.abs(g["out.b"]).max() < 1e-40


def test_unused_layers_have_no_gradient_entry():
    spec = ModelSpec(2, 2, 3, 1, (), 2, 0.0)
    _, g = loss_and_grads(np.ones((3, 2)), 1, spec, init_params(spec, 0))
    assert "lstm1.W" not in g and "fc0.W" not in g
    assert set(g) == set(spec.param_shapes())


def test_stale_cache_detected():
    spec = ModelSpec(2, 2, 3)
    p = init_params(spec, 0)
    _, cache = forward(np.ones((3, 2)), spec, p)
    p["embed.W"].flat[0] += 1.0
    with pytest.raises(StaleCacheError):
        backward(cache, 0)


def test_training_step_decreases_loss():
    rng = np.random.default_rng(7)
    failures = 0
    for trial in range(100):
        spec, p, x, y = random_model(rng)
        spec = ModelSpec(spec.input_dim, spec.embed_dim, spec.hidden_dim, spec.num_lstm_layers,
                         spec.head_dims, spec.num_classes, 0.0)
        before, g = loss_and_grads(x, y, spec, p)
        adam_step(p, g, AdamState(lr=1e-4))
        after, _ = loss_and_grads(x, y, spec, p)
        failures += not after < before
    assert failures <= 1


# -- init / adam / checkpoint ---------------------------------------------------------


def test_init_params_rules():
    spec = ModelSpec(5, 6, 7, 2, (8, 4), 3, 0.3)
    a, b = init_params(spec, 11), init_params(spec, 11)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    for l in range(2):
        assert np.all(a[f"lstm{l}.b"][:7] == 1.0)
        assert np.all(a[f"lstm{l}.b"][7:] == 0.0)
    for k, v in a.items():
        if k.endswith(".W"):
            assert np.abs(v).max() <= 1 / math.sqrt(v.shape[1])
    check_params(spec, a)


def test_paper_reference_spec_is_representable():
    spec = ModelSpec.paper_reference()
    shapes = spec.param_shapes()
    assert shapes["lstm2.W"] == (2048, 1024)
    assert shapes["fc0.W"] == (256, 512)
    assert spec.dropout_rate == 0.3


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step():
    st_ = AdamState()
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, st_)
    assert st_.t == 1
    assert p["w"][0] == pytest.approx(-1e-4 / (1 + 1e-8), rel=1e-12)


def test_adam_moves_against_constant_gradient():
    st_ = AdamState(lr=1e-2)
    p = {"w": np.array([0.0, 0.0])}
    g = {"w": np.array([2.0, -3.0])}
    trail = []
    for _ in range(3):
        adam_step(p, g, st_)
        trail.append(p["w"].copy())
    assert trail[0][0] < 0 < trail[0][1]
    assert trail[2][0] < trail[1][0] < trail[0][0]
    assert trail[2][1] > trail[1][1] > trail[0][1]


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


def test_checkpoint_round_trip(tmp_path):
    spec = ModelSpec(3, 4, 5, 2, (6,), 3, 0.3)
    p = init_params(spec, 9)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, spec, p)
    assert path.read_bytes().startswith(b"STEPSEQ-CKPT v1\n")
    spec2, p2 = load_checkpoint(path)
    assert spec2 == spec
    assert all(np.array_equal(p[k], p2[k]) for k in p)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"hello\n")
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(path)
