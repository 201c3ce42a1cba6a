"""Minimal differentiable convolutional network with per-layer prune masks.

The network is 3x3 conv -> ReLU -> 1x1 conv -> ReLU -> average pool ->
flatten -> dense, all in float64 numpy. Every weighted layer carries a
weight tensor, a bias vector (never pruned), a prune mask, and momentum
buffers. Forward caches what backward needs; backward produces
cross-entropy gradients with pruned positions already zeroed.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeMismatchError
from .tensor import ones_mask


class Conv2d:
    """Stride-1 convolution; 'same' padding for odd kernels (pad = R // 2)."""

    kind = "conv"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        K, C, R, S = weight.shape
        self.weight = weight.astype(np.float64)
        self.bias = bias.astype(np.float64)
        self.mask = ones_mask(self.weight)
        self.vel_w = np.zeros_like(self.weight)
        self.vel_b = np.zeros_like(self.bias)
        self.pad = R // 2
        self._windows = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        K, C, R, S = self.weight.shape
        if x.ndim != 4 or x.shape[1] != C:
            raise ShapeMismatchError(f"conv expects (B, {C}, H, W), got {x.shape}")
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(xp, (R, S), axis=(2, 3))
        self._windows = windows
        out = np.einsum("bchwrs,kcrs->bkhw", windows, self.weight)
        return out + self.bias[None, :, None, None]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        K, C, R, S = self.weight.shape
        windows = self._windows
        self.grad_w = np.einsum("bchwrs,bkhw->kcrs", windows, dout) * self.mask
        self.grad_b = dout.sum(axis=(0, 2, 3))
        q = R - 1 - self.pad
        dp = np.pad(dout, ((0, 0), (0, 0), (q, q), (q, q))) if q else dout
        dwin = sliding_window_view(dp, (R, S), axis=(2, 3))
        wrot = self.weight[:, :, ::-1, ::-1]
        return np.einsum("bkhwrs,kcrs->bchw", dwin, wrot)


class ReLU:
    kind = "relu"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.where(self._active, dout, 0.0)


class AvgPool2d:
    """Non-overlapping pooling: window p, stride p; spatial dims must divide."""

    kind = "pool"

    def __init__(self, pool: int):
        self.pool = pool

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, K, H, W = x.shape
        p = self.pool
        if H % p or W % p:
            raise ShapeMismatchError(f"pool {p} does not divide spatial dims ({H}, {W})")
        self._in_shape = x.shape
        return x.reshape(B, K, H // p, p, W // p, p).mean(axis=(3, 5))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        B, K, H, W = self._in_shape
        p = self.pool
        g = dout / (p * p)
        return np.repeat(np.repeat(g, p, axis=2), p, axis=3)


class Flatten:
    kind = "flatten"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout.reshape(self._in_shape)


class Dense:
    kind = "fc"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = weight.astype(np.float64)
        self.bias = bias.astype(np.float64)
        self.mask = ones_mask(self.weight)
        self.vel_w = np.zeros_like(self.weight)
        self.vel_b = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatchError(
                f"dense expects (B, {self.weight.shape[0]}), got {x.shape}"
            )
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.grad_w = (self._x.T @ dout) * self.mask
        self.grad_b = dout.sum(axis=0)
        return dout @ self.weight.T


class ToyModel:
    """Layer stack with shape-chain validation and named prunable layers."""

    def __init__(self, channels: int, image_size: int, n_classes: int,
                 conv1_out: int = 8, conv2_out: int = 8, pool: int = 2, seed: int = 0):
        if image_size % pool:
            raise ConfigError(f"pool {pool} does not divide image_size {image_size}")
        rng = np.random.default_rng(seed)

        def he(shape, fan_in):
            return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

        self.channels = channels
        self.image_size = image_size
        self.n_classes = n_classes
        self.pool = pool
        side = image_size // pool
        self.neurons_per_channel = side * side

        self.conv1 = Conv2d(he((conv1_out, channels, 3, 3), channels * 9), np.zeros(conv1_out))
        self.conv2 = Conv2d(he((conv2_out, conv1_out, 1, 1), conv1_out), np.zeros(conv2_out))
        fc_rows = conv2_out * self.neurons_per_channel
        self.fc = Dense(he((fc_rows, n_classes), fc_rows), np.zeros(n_classes))
        self.layers = [self.conv1, ReLU(), self.conv2, ReLU(),
                       AvgPool2d(pool), Flatten(), self.fc]

    def prunable(self):
        return [("conv1", self.conv1), ("conv2", self.conv2), ("fc", self.fc)]

    def apply_masks(self) -> None:
        for _, layer in self.prunable():
            layer.weight *= layer.mask
            layer.vel_w *= layer.mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    p = softmax(logits)
    return float(-np.log(p[np.arange(len(labels)), labels] + 1e-300).mean())


def forward(model: ToyModel, batch: np.ndarray) -> np.ndarray:
    """Run the stack; weights are assumed to already hold masked values."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != model.channels or x.shape[2] != model.image_size:
        raise ShapeMismatchError(
            f"batch must be (B, {model.channels}, {model.image_size}, "
            f"{model.image_size}), got {x.shape}"
        )
    for layer in model.layers:
        x = layer.forward(x)
    model._logits = x
    return x


def backward(model: ToyModel, batch: np.ndarray, labels: np.ndarray,
             return_input_grad: bool = False):
    """Mean cross-entropy gradients for the batch passed to the last forward.

    Gradients at pruned positions are exactly zero. Returns a dict of
    ``name -> (grad_w, grad_b)``; with ``return_input_grad`` also returns
    the loss gradient w.r.t. the input batch.
    """
    labels = np.asarray(labels)
    B = len(labels)
    d = softmax(model._logits)
    d[np.arange(B), labels] -= 1.0
    d /= B
    for layer in reversed(model.layers):
        d = layer.backward(d)
    grads = {name: (layer.grad_w, layer.grad_b) for name, layer in model.prunable()}
    if return_input_grad:
        return grads, d
    return grads


def sgd_step(model: ToyModel, grads: dict, lr: float,
             momentum: float = 0.9, weight_decay: float = 1e-4) -> None:
    """Momentum SGD update; weights, velocities re-masked after the step.

    Weight decay acts on weights only; biases update unmasked and
    undecayed. Re-masking keeps pruned positions and their momentum at
    exactly zero so stale velocity can never resurrect a pruned weight.
    """
    for name, layer in model.prunable():
        gw, gb = grads[name]
        layer.vel_w = momentum * layer.vel_w + gw + weight_decay * layer.weight
        layer.weight = layer.weight - lr * layer.vel_w
        layer.vel_w *= layer.mask
        layer.weight *= layer.mask
        layer.vel_b = momentum * layer.vel_b + gb
        layer.bias = layer.bias - lr * layer.vel_b
