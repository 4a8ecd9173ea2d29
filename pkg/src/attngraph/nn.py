"""Shared dense-math building blocks: initializers, activations, loss, Adam.

Everything runs in float64; model parameters are plain dicts of numpy
arrays so training loops and gradient checks can treat them uniformly.
"""
from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Xavier-uniform weight matrix of shape (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0.0, 1.0, slope)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(x))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, 1.0, np.exp(x))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def masked_row_softmax(scores: np.ndarray, mask: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax restricted to mask==True entries; masked-out entries are exactly 0.

    Every row must contain at least one unmasked entry.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.where(mask, scores / temperature, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Inverse-frequency weights w_k = N / (K * N_k) over the training labels.

    Classes absent from `labels` get weight 1.0 (they never enter the loss);
    at least two distinct classes must be present.
    """
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).astype(np.float64)
    if (counts > 0).sum() < 2:
        raise ValueError("class weights undefined: training labels contain a single class")
    n = counts.sum()
    w = np.ones(num_classes, dtype=np.float64)
    present = counts > 0
    w[present] = n / (num_classes * counts[present])
    return w


def weighted_cross_entropy(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Class-weighted cross entropy over rows of `logits`, normalized by the
    sum of the per-example weights (a weighted mean).

    Returns (loss, dloss/dlogits).
    """
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits)
    w = weights[labels]
    wsum = w.sum()
    loss = float(-(w * logp[np.arange(len(labels)), labels]).sum() / wsum)
    p = np.exp(logp)
    d = p * w[:, None]
    d[np.arange(len(labels)), labels] -= w
    return loss, d / wsum


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: zeros with probability `rate`, survivors scaled by 1/(1-rate)."""
    if rate <= 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


class Adam:
    """Adam over a dict of parameter arrays (updates in place)."""

    def __init__(self, params: Params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Params) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
