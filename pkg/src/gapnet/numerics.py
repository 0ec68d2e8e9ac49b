"""Dense-network math: layers, activations, loss, backprop, Adam, dropout.

Everything operates on float64 numpy arrays. Batches are row-major
(samples x features). Networks are plain stacks of dense layers with an
optional inverted-dropout mask after selected layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCORE_EPS = 1e-12


class NumericsError(ValueError):
    """Raised on shape mismatches or non-finite values in network math."""


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "relu": relu,
    "sigmoid": sigmoid,
    "identity": lambda z: z,
}


def _activation_grad(name, z, h):
    """d(activation)/dz given pre-activation z and post-activation h."""
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "identity":
        return np.ones_like(z)
    raise NumericsError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: str = "relu"
    trainable: bool = True

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


@dataclass
class DropoutSpec:
    rate: float  # probability of dropping a unit, in [0, 1)
    placement: int  # index of the layer this mask follows

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise NumericsError(f"dropout rate must be in [0, 1), got {self.rate}")


def glorot_init(fan_in, fan_out, rng):
    """Glorot-uniform weight matrix; biases are created separately as zeros."""
    if fan_in < 1 or fan_out < 1:
        raise NumericsError("fan_in and fan_out must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense_layer(fan_in, fan_out, activation, rng):
    return DenseLayer(
        weights=glorot_init(fan_in, fan_out, rng),
        biases=np.zeros(fan_out),
        activation=activation,
    )


@dataclass
class ForwardCache:
    """Per-layer tensors recorded during a forward pass, needed by backprop."""

    inputs: list  # input to each layer (post-dropout of the previous one)
    pre_activations: list
    post_activations: list  # after activation, before dropout
    dropout_masks: dict  # layer index -> mask (already scaled by 1/keep)
    outputs: np.ndarray  # final post-dropout output of the last layer


class MlpNetwork:
    """A stack of dense layers with optional dropout after given layers."""

    def __init__(self, layers, dropout=()):
        for a, b in zip(layers, layers[1:]):
            if a.fan_out != b.fan_in:
                raise NumericsError(
                    f"layer widths do not chain: {a.fan_out} -> {b.fan_in}"
                )
        self.layers = list(layers)
        self.dropout = list(dropout)
        for spec in self.dropout:
            if not 0 <= spec.placement < len(self.layers):
                raise NumericsError(f"dropout placement {spec.placement} out of range")

    @property
    def input_width(self):
        return self.layers[0].fan_in

    @property
    def output_width(self):
        return self.layers[-1].fan_out

    def parameters(self):
        """Flat list of (weights, biases) pairs in layer order."""
        return [(layer.weights, layer.biases) for layer in self.layers]

    def _dropout_for(self, index):
        for spec in self.dropout:
            if spec.placement == index:
                return spec
        return None

    def forward(self, batch, mode="infer", rng=None):
        """Run the network; in train mode draws and records dropout masks."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_width:
            raise NumericsError(
                f"batch width {batch.shape[1] if batch.ndim == 2 else batch.shape} "
                f"does not match network input width {self.input_width}"
            )
        if mode == "train" and any(s.rate > 0 for s in self.dropout) and rng is None:
            raise NumericsError("train mode with dropout requires an rng")
        inputs, pre, post, masks = [], [], [], {}
        a = batch
        for i, layer in enumerate(self.layers):
            inputs.append(a)
            z = a @ layer.weights + layer.biases
            h = _ACTIVATIONS[layer.activation](z)
            pre.append(z)
            post.append(h)
            spec = self._dropout_for(i)
            if spec is not None and spec.rate > 0 and mode == "train":
                keep = 1.0 - spec.rate
                mask = (rng.random(h.shape) < keep) / keep
                masks[i] = mask
                a = h * mask
            else:
                a = h
        return ForwardCache(inputs, pre, post, masks, a)

    def backprop(self, cache, labels):
        """Gradients of mean BCE loss w.r.t. all parameters.

        Requires a sigmoid output head; uses the fused sigmoid+BCE delta.
        Non-trainable layers get zero gradient slots.
        """
        labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
        scores = cache.outputs
        if scores.shape[0] != labels.shape[0]:
            raise NumericsError("label count does not match batch size")
        if self.layers[-1].activation != "sigmoid":
            raise NumericsError("backprop against labels requires a sigmoid head")
        n = scores.shape[0]
        delta = (scores - labels) / n  # dL/dz of the output layer
        last = len(self.layers) - 1
        if last in cache.dropout_masks:
            # mask sits after the sigmoid; fold it into the fused delta
            delta = delta * cache.dropout_masks[last]
        return self._backward(cache, delta)

    def backprop_from(self, cache, upstream):
        """Gradients given dL/d(final post-dropout output) instead of labels."""
        last = len(self.layers) - 1
        grad_h = upstream
        if last in cache.dropout_masks:
            grad_h = grad_h * cache.dropout_masks[last]
        delta = grad_h * _activation_grad(
            self.layers[last].activation, cache.pre_activations[last], cache.post_activations[last]
        )
        return self._backward(cache, delta)

    def _backward(self, cache, delta):
        """Shared backward chain; `delta` is dL/dz of the last layer."""
        grads = [None] * len(self.layers)
        grad_input = None
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.trainable:
                grads[i] = (cache.inputs[i].T @ delta, delta.sum(axis=0))
            else:
                grads[i] = (np.zeros_like(layer.weights), np.zeros_like(layer.biases))
            grad_input = delta @ layer.weights.T
            if i > 0:
                grad_h = grad_input
                if (i - 1) in cache.dropout_masks:
                    grad_h = grad_h * cache.dropout_masks[i - 1]
                delta = grad_h * _activation_grad(
                    self.layers[i - 1].activation,
                    cache.pre_activations[i - 1],
                    cache.post_activations[i - 1],
                )
        return grads

    def copy(self):
        layers = [
            DenseLayer(l.weights.copy(), l.biases.copy(), l.activation, l.trainable)
            for l in self.layers
        ]
        return MlpNetwork(layers, [DropoutSpec(s.rate, s.placement) for s in self.dropout])


def bce_loss(scores, labels):
    """Mean binary cross-entropy; scores are clamped away from {0, 1}."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise NumericsError("bce_loss on empty input")
    if scores.shape != labels.shape:
        raise NumericsError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise NumericsError("non-finite score passed to bce_loss")
    s = np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    return float(-np.mean(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s)))


@dataclass
class AdamState:
    """Adam moments for one list of parameter arrays."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def _ensure(self, params):
        if not self.first_moment:
            self.first_moment = [np.zeros_like(p) for p in params]
            self.second_moment = [np.zeros_like(p) for p in params]
        if len(self.first_moment) != len(params):
            raise NumericsError("Adam state does not match parameter count")


def adam_step(params, grads, state):
    """One in-place Adam update over a flat list of parameter arrays."""
    state._ensure(params)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter {i}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def finite_diff_grad(network, batch, labels, epsilon=1e-6):
    """Central-difference gradient of mean BCE, parameter by parameter.

    Test oracle: runs the network in infer mode, so dropout must be disabled
    when comparing against backprop.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise NumericsError("epsilon out of the supported range [1e-7, 1e-4]")

    def loss():
        return bce_loss(network.forward(batch, mode="infer").outputs, labels)

    grads = []
    for weights, biases in network.parameters():
        pair = []
        for arr in (weights, biases):
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + epsilon
                up = loss()
                flat[k] = orig - epsilon
                down = loss()
                flat[k] = orig
                gflat[k] = (up - down) / (2.0 * epsilon)
            pair.append(g)
        grads.append(tuple(pair))
    return grads
