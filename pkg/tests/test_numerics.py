import math

import numpy as np
import pytest

from gapnet.numerics import (
    AdamState,
    DenseLayer,
    DropoutSpec,
    MlpNetwork,
    NumericsError,
    adam_step,
    bce_loss,
    dense_layer,
    finite_diff_grad,
    glorot_init,
    relu,
    sigmoid,
)


def make_net(widths, activations, seed=0, dropout=()):
    rng = np.random.default_rng(seed)
    layers = [
        dense_layer(a, b, act, rng)
        for (a, b), act in zip(zip(widths, widths[1:]), activations)
    ]
    return MlpNetwork(layers, dropout)


def test_sigmoid_symmetry():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert sigmoid(np.array([500.0]))[0] == pytest.approx(1.0)
    assert sigmoid(np.array([-500.0]))[0] == pytest.approx(0.0)


def test_relu_definition():
    assert relu(np.array([-3.0]))[0] == 0.0
    assert relu(np.array([2.5]))[0] == 2.5


def test_identity_layer_passes_input_through():
    net = MlpNetwork([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(net.forward(x).outputs, x)


def test_forward_rejects_width_mismatch():
    net = make_net([4, 3, 1], ["relu", "sigmoid"])
    with pytest.raises(NumericsError, match="width"):
        net.forward(np.zeros((2, 5)))


def test_sigmoid_head_scores_in_open_interval():
    net = make_net([3, 6, 1], ["relu", "sigmoid"], seed=2)
    out = net.forward(np.random.default_rng(0).standard_normal((10, 3))).outputs
    assert np.all(out > 0) and np.all(out < 1)


def test_bce_all_half_is_ln2():
    assert bce_loss([0.5, 0.5, 0.5], [1, 0, 1]) == pytest.approx(math.log(2))


def test_bce_perfect_prediction_near_zero():
    assert bce_loss([1 - 1e-12], [1]) == pytest.approx(0.0, abs=1e-9)


def test_bce_frozen_example():
    # brute force: -(ln 0.9 + ln 0.8) / 2
    assert bce_loss([0.9, 0.2], [1, 0]) == pytest.approx(0.164252033486018, abs=1e-12)


def test_bce_rejects_empty_and_nan():
    with pytest.raises(NumericsError):
        bce_loss([], [])
    with pytest.raises(NumericsError):
        bce_loss([np.nan], [1])


def test_logistic_regression_gradient_closed_form():
    # single dense layer + sigmoid: dW_j = mean((s - y) * x_j)
    rng = np.random.default_rng(3)
    net = make_net([4, 1], ["sigmoid"], seed=3)
    x = rng.standard_normal((12, 4))
    y = rng.integers(0, 2, 12).astype(float)
    cache = net.forward(x, mode="train")
    (gw, gb), = net.backprop(cache, y)
    s = cache.outputs.reshape(-1)
    expected = (x * (s - y)[:, None]).mean(axis=0)
    assert gw.reshape(-1) == pytest.approx(expected, abs=1e-12)
    assert gb[0] == pytest.approx((s - y).mean(), abs=1e-12)


def test_labels_equal_scores_give_zero_gradients():
    net = make_net([3, 5, 1], ["relu", "sigmoid"], seed=4)
    x = np.random.default_rng(1).standard_normal((6, 3))
    cache = net.forward(x, mode="train")
    grads = net.backprop(cache, cache.outputs.reshape(-1))
    for gw, gb in grads:
        assert np.all(gw == 0) and np.all(gb == 0)


def rel_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            scale = np.maximum(np.abs(a) + np.abs(n), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = make_net([5, 10, 10, 1], ["relu", "relu", "sigmoid"], seed=seed)
    x = rng.standard_normal((7, 5))
    y = rng.integers(0, 2, 7).astype(float)
    cache = net.forward(x, mode="train")
    analytic = net.backprop(cache, y)
    numeric = finite_diff_grad(net, x, y)
    assert rel_error(analytic, numeric) < 1e-4


def test_finite_diff_matches_logistic_closed_form():
    rng = np.random.default_rng(7)
    net = make_net([3, 1], ["sigmoid"], seed=7)
    x = rng.standard_normal((9, 3))
    y = rng.integers(0, 2, 9).astype(float)
    (gw, gb), = finite_diff_grad(net, x, y)
    s = net.forward(x).outputs.reshape(-1)
    expected = (x * (s - y)[:, None]).mean(axis=0)
    assert gw.reshape(-1) == pytest.approx(expected, abs=1e-6)


def test_finite_diff_epsilon_bounds():
    net = make_net([2, 1], ["sigmoid"])
    with pytest.raises(NumericsError):
        finite_diff_grad(net, np.zeros((1, 2)), [1], epsilon=1e-3)


def test_adam_first_step_magnitude():
    # with a constant gradient the bias-corrected ratio is sign(g)
    params = [np.array([1.0, -2.0])]
    grads = [np.array([0.3, -4.0])]
    state = AdamState(learning_rate=1e-3)
    adam_step(params, grads, state)
    delta = params[0] - np.array([1.0, -2.0])
    assert delta == pytest.approx([-1e-3, 1e-3], rel=1e-6)


def test_adam_zero_gradient_is_a_fixed_point():
    params = [np.array([0.5, 1.5])]
    state = AdamState()
    for _ in range(10):
        adam_step(params, [np.zeros(2)], state)
    assert np.array_equal(params[0], [0.5, 1.5])
    assert state.step_count == 10


def test_adam_rejects_non_finite_gradient():
    state = AdamState()
    with pytest.raises(NumericsError, match="parameter 1"):
        adam_step([np.zeros(2), np.zeros(2)], [np.zeros(2), np.array([np.inf, 0.0])], state)


def test_adam_trajectories_are_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        net = make_net([4, 8, 1], ["relu", "sigmoid"], seed=11)
        x = rng.standard_normal((10, 4))
        y = rng.integers(0, 2, 10).astype(float)
        params = [p for layer in net.layers for p in (layer.weights, layer.biases)]
        state = AdamState()
        for _ in range(50):
            cache = net.forward(x, mode="train")
            grads = [g for pair in net.backprop(cache, y) for g in pair]
            adam_step(params, grads, state)
        return [p.copy() for p in params]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_glorot_bound_and_determinism():
    w = glorot_init(3, 3, np.random.default_rng(0))
    assert np.all(np.abs(w) <= 1.0)  # sqrt(6/6) = 1
    assert np.array_equal(w, glorot_init(3, 3, np.random.default_rng(0)))


def test_glorot_mean_near_zero():
    w = glorot_init(500, 200, np.random.default_rng(1))
    assert abs(w.mean()) < 0.01


def test_glorot_rejects_degenerate_fans():
    with pytest.raises(NumericsError):
        glorot_init(0, 3, np.random.default_rng(0))


def test_inverted_dropout_preserves_expectation():
    net = MlpNetwork(
        [DenseLayer(np.eye(4), np.zeros(4), "identity")],
        [DropoutSpec(0.5, placement=0)],
    )
    x = np.full((1, 4), 3.0)
    rng = np.random.default_rng(1)
    total = np.zeros(4)
    n_masks = 10_000
    for _ in range(n_masks):
        total += net.forward(x, mode="train", rng=rng).outputs[0]
    infer = net.forward(x, mode="infer").outputs[0]
    assert np.all(np.abs(total / n_masks - infer) / infer < 0.02)


def test_dropout_rate_must_be_below_one():
    with pytest.raises(NumericsError):
        DropoutSpec(1.0, 0)


def test_gradient_descent_decreases_loss_on_separable_toy():
    rng = np.random.default_rng(9)
    n = 40
    y = (np.arange(n) % 2).astype(float)
    x = np.where(y[:, None] == 1, 1.5, -1.5) + 0.2 * rng.standard_normal((n, 2))
    net = make_net([2, 4, 1], ["relu", "sigmoid"], seed=9)
    losses = []
    for _ in range(100):
        cache = net.forward(x, mode="train")
        losses.append(bce_loss(cache.outputs, y))
        for layer, (gw, gb) in zip(net.layers, net.backprop(cache, y)):
            layer.weights -= 0.05 * gw
            layer.biases -= 0.05 * gb
    assert all(a > b for a, b in zip(losses, losses[1:]))
