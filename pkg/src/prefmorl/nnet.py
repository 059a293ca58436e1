"""Minimal feedforward network with exact reverse-mode gradients and an
Adam optimizer, on numpy.

The package trains two small approximators (the reward model and the
weight-conditioned Q network); both share this implementation: tanh
hidden layers, linear output, Xavier initialization with an optionally
zero-initialized output layer so fresh models predict exactly zero.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected network: tanh hidden layers, linear output."""

    def __init__(
        self,
        sizes: list[int],
        rng: np.random.Generator,
        zero_output: bool = True,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(1.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        if zero_output:
            self.weights[-1][:] = 0.0

    # -- forward / backward -------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, cache).  ``x`` is (batch, in_dim)."""
        h = np.asarray(x, dtype=np.float64)
        cache = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> list[np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. all parameters,
        ordered [W0, b0, W1, b1, ...]."""
        grads: list[np.ndarray] = []
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            inputs = cache[i]
            grads.append(delta.sum(axis=0))  # bias
            grads.append(inputs.T @ delta)  # weight
            if i > 0:
                delta = delta @ self.weights[i].T
                delta *= 1.0 - cache[i] ** 2  # tanh'
        grads.reverse()
        return grads

    # -- parameter plumbing -------------------------------------------

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for p in self.params:
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")

    def copy(self) -> "MLP":
        clone = MLP(self.sizes, np.random.default_rng(0), zero_output=False)
        clone.set_flat(self.get_flat())
        return clone

    def soft_update_from(self, other: "MLP", tau: float) -> None:
        """params <- (1 - tau) * params + tau * other.params"""
        for mine, theirs in zip(self.params, other.params):
            mine *= 1.0 - tau
            mine += tau * theirs


class Adam:
    """Adaptive moment estimation over a list of parameter arrays."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def bounded_output(z: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Clamp raw outputs to (-scale, scale) per component with
    scale * tanh(z / scale): identity-like near zero, saturating at the
    configured reward magnitude."""
    return scale * np.tanh(z / scale)


def bounded_output_grad(z: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """d bounded_output / dz."""
    return 1.0 - np.tanh(z / scale) ** 2
