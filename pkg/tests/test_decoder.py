import math

import numpy as np
import pytest

from attncut.decoder import (
    TrainBatch,
    adam_step,
    forward,
    init_decoder,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
    stack_features,
    train,
)


def zeroed(c_in=3, hidden=4):
    params = init_decoder(0, c_in=c_in, hidden=hidden)
    for i in range(3):
        params.weights[i][:] = 0.0
        params.biases[i][:] = 0.0
    return params


def test_init_deterministic_and_bounded():
    a = init_decoder(7, c_in=5, hidden=8)
    b = init_decoder(7, c_in=5, hidden=8)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert a.weights[0].shape == (5, 8)
    assert a.weights[1].shape == (8, 8)
    assert a.weights[2].shape == (8, 1)
    for w in a.weights:
        assert np.abs(w).max() <= math.sqrt(1.0 / w.shape[0])
    for bias, m, v in zip(a.biases, a.m_w, a.v_w):
        assert not bias.any() and not m.any() and not v.any()


def test_minimal_shapes():
    params = init_decoder(0, c_in=1, hidden=1)
    assert sum(w.size for w in params.weights) == 3
    assert sum(b.size for b in params.biases) == 3


def test_zero_params_output_half():
    params = zeroed()
    out = forward(params, np.random.default_rng(0).standard_normal((4, 4, 3)))
    assert np.allclose(out, 0.5)


def test_forward_matches_straightline_oracle():
    rng = np.random.default_rng(3)
    params = init_decoder(5, c_in=4, hidden=6)
    x = rng.standard_normal((2, 3, 4))
    out = forward(params, x)
    # independent straight-line evaluation, one pixel at a time
    for i in range(2):
        for j in range(3):
            v = x[i, j]
            h1 = np.maximum(v @ params.weights[0] + params.biases[0], 0)
            h2 = np.maximum(h1 @ params.weights[1] + params.biases[1], 0)
            z = float((h2 @ params.weights[2] + params.biases[2])[0])
            p = 1.0 / (1.0 + math.exp(-z))
            assert abs(out[i, j] - p) < 1e-6


def test_final_weight_monotonicity():
    params = zeroed(c_in=2, hidden=2)
    params.weights[0][:, 0] = 1.0     # h1[0] = relu(x0 + x1)
    params.weights[1][0, 0] = 1.0     # h2[0] = h1[0]
    params.weights[2][0, 0] = 0.5
    x = np.array([[[1.0, 2.0]]])      # active path, h2[0] = 3
    p1 = forward(params, x)[0, 0]
    params.weights[2][0, 0] = 1.0     # doubling the final-layer weight
    p2 = forward(params, x)[0, 0]
    assert p2 > p1


def test_channel_mismatch():
    params = init_decoder(0, c_in=3, hidden=4)
    with pytest.raises(ValueError):
        forward(params, np.zeros((2, 2, 5)))


def test_loss_at_half_is_ln2():
    params = zeroed()
    batch = TrainBatch(np.zeros((1, 3, 3, 3)), np.zeros((1, 3, 3)))
    loss, _ = loss_and_grad(params, batch)
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_loss_near_zero_when_confident_and_correct():
    params = zeroed()
    params.biases[2][0] = 20.0  # saturate probabilities at ~1
    batch = TrainBatch(np.zeros((1, 2, 2, 3)), np.ones((1, 2, 2)))
    loss, _ = loss_and_grad(params, batch)
    assert loss < 1e-8


def test_gradients_match_central_differences():
    rng = np.random.default_rng(11)
    params = init_decoder(13, c_in=3, hidden=4)
    batch = TrainBatch(rng.standard_normal((2, 3, 3, 3)), (rng.random((2, 3, 3)) > 0.5).astype(float))
    _, grads = loss_and_grad(params, batch)
    h = 1e-4
    worst = 0.0
    for i, key in ((0, "w0"), (1, "w1"), (2, "w2")):
        w = params.weights[i]
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            lp, _ = loss_and_grad(params, batch)
            w[idx] = orig - h
            lm, _ = loss_and_grad(params, batch)
            w[idx] = orig
            fd = (lp - lm) / (2 * h)
            g = grads[key][idx]
            denom = max(abs(fd), abs(g), 1e-8)
            worst = max(worst, abs(fd - g) / denom)
    assert worst < 1e-4


def test_adam_first_step_closed_form():
    params = zeroed(c_in=1, hidden=1)
    grads = {"w0": np.array([[1.0]]), "b0": np.zeros(1),
             "w1": np.array([[0.0]]), "b1": np.zeros(1),
             "w2": np.array([[0.0]]), "b2": np.zeros(1)}
    adam_step(params, grads)
    expected = -0.001 * 1.0 / (1.0 + 1e-8)
    assert params.weights[0][0, 0] == pytest.approx(expected, abs=1e-12)
    assert params.step == 1


def test_adam_zero_gradient_is_identity():
    params = init_decoder(0, c_in=2, hidden=3)
    before = [w.copy() for w in params.weights]
    grads = {f"w{i}": np.zeros_like(params.weights[i]) for i in range(3)}
    grads |= {f"b{i}": np.zeros_like(params.biases[i]) for i in range(3)}
    adam_step(params, grads)
    for w, b in zip(params.weights, before):
        assert np.array_equal(w, b)


def test_training_deterministic():
    rng = np.random.default_rng(17)
    samples = [(rng.standard_normal((4, 4, 3)), (rng.random((4, 4)) > 0.5).astype(float))
               for _ in range(6)]
    p1, c1 = train(samples, 3, init_decoder(1, 3, 4), batch_size=2, shuffle_seed=9)
    p2, c2 = train(samples, 3, init_decoder(1, 3, 4), batch_size=2, shuffle_seed=9)
    assert c1 == c2
    for a, b in zip(p1.weights, p2.weights):
        assert np.array_equal(a, b)


def test_zero_learning_rate_is_identity_on_parameters():
    rng = np.random.default_rng(31)
    samples = [(rng.standard_normal((4, 4, 3)), (rng.random((4, 4)) > 0.5).astype(float))
               for _ in range(4)]
    params = init_decoder(5, 3, 4, lr=0.0)
    before = [w.copy() for w in params.weights] + [b.copy() for b in params.biases]
    params, _ = train(samples, 3, params, batch_size=2)
    after = params.weights + params.biases
    for a, b in zip(after, before):
        assert np.array_equal(a, b)
    assert params.step == 6  # moments and step still advance


def test_zero_epochs_is_identity():
    params = init_decoder(3, 3, 4)
    before = [w.copy() for w in params.weights]
    out, curve = train([(np.zeros((2, 2, 3)), np.zeros((2, 2)))], 0, params)
    assert curve == []
    for w, b in zip(out.weights, before):
        assert np.array_equal(w, b)


def test_loss_batch_order_invariance():
    rng = np.random.default_rng(19)
    feats = rng.standard_normal((4, 3, 3, 2))
    targets = (rng.random((4, 3, 3)) > 0.5).astype(float)
    params = init_decoder(2, 2, 4)
    l1, _ = loss_and_grad(params, TrainBatch(feats, targets))
    perm = [2, 0, 3, 1]
    l2, _ = loss_and_grad(params, TrainBatch(feats[perm], targets[perm]))
    assert l1 == pytest.approx(l2, rel=1e-12)


def test_overfit_single_sample():
    rng = np.random.default_rng(23)
    target = np.zeros((8, 8))
    target[2:6, 2:6] = 1.0
    feats = np.where(target[:, :, None] > 0, 3.0, -3.0) + 0.3 * rng.standard_normal((8, 8, 2))
    params = init_decoder(0, c_in=2, hidden=8)
    params, _ = train([(feats, target)], epochs=200, params=params, batch_size=1)
    mask = predict(params, feats, (8, 8)) > 127
    gt = target > 0.5
    iou = (mask & gt).sum() / (mask | gt).sum()
    assert iou > 0.9


def test_predict_zero_params_all_background():
    params = zeroed()
    mask = predict(params, np.zeros((4, 4, 3)), (8, 8))
    assert not mask.any()  # sigmoid(0) = 0.5, ties go to background


def test_stack_features_shapes():
    layers = [np.zeros((4, 4, 2)), np.zeros((8, 8, 3))]
    out = stack_features(layers, 8)
    assert out.shape == (8, 8, 5)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(29)
    params = init_decoder(4, c_in=3, hidden=5, lr=0.002)
    grads = {f"w{i}": rng.standard_normal(params.weights[i].shape) for i in range(3)}
    grads |= {f"b{i}": rng.standard_normal(params.biases[i].shape) for i in range(3)}
    adam_step(params, grads)
    save_checkpoint(params, str(tmp_path / "ckpt"))
    back = load_checkpoint(str(tmp_path / "ckpt"))
    assert back.step == 1
    assert back.lr == 0.002
    for a, b in zip(back.weights, params.weights):
        assert np.allclose(a, b, atol=1e-6)  # f32 storage rounding
    for a, b in zip(back.m_w, params.m_w):
        assert np.allclose(a, b, atol=1e-6)
