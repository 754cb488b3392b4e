# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = ['MLPWeights', 'AdamState', 'init_mlp', 'mlp_logits', 'mlp_forward',
           'loss_and_gradient', 'adam_init', 'adam_step', 'BLOCK_ROWS']

# inference runs in fixed-size row blocks so a row's output does not depend
# on the batch it arrives in
BLOCK_ROWS = 64


@dataclass(eq=False)
class MLPWeights:
    """ReLU hidden layers and one logit output; W[k] has shape (in, out)"""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float = 0.2

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError('Weights and biases must pair up')
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError('Inconsistent layer shapes')
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ValueError('Consecutive layers do not chain')
        if self.weights[-1].shape[1] != 1:
            raise ValueError('Output layer must have a single unit')
        if not 0 <= self.dropout < 1:
            raise ValueError('Dropout rate must be in [0, 1)')

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)

    def copy(self) -> MLPWeights:
        return MLPWeights([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                          self.dropout)

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases


def init_mlp(sizes: list[int], rng: np.random.Generator, dropout: float = 0.2) -> MLPWeights:
    """He-initialized weights, zero biases"""
    weights = [rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
               for n_in, n_out in zip(sizes, sizes[1:])]
    biases = [np.zeros(n) for n in sizes[1:]]
    return MLPWeights(weights, biases, dropout)


def _block_logits(theta: MLPWeights, block: np.ndarray) -> np.ndarray:
    h = block
    last = len(theta.weights) - 1
    for k, (w, b) in enumerate(zip(theta.weights, theta.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def mlp_logits(theta: MLPWeights, x: np.ndarray, training: bool = False,
               rng: None | np.random.Generator = None) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if training and theta.dropout > 0:
        if rng is None:
            raise ValueError('Dropout needs a random generator')
        h = x
        last = len(theta.weights) - 1
        keep = 1.0 - theta.dropout
        for k, (w, b) in enumerate(zip(theta.weights, theta.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0) * (rng.random(h.shape) < keep) / keep
        return h[:, 0]

    n = len(x)
    pad = (-n) % BLOCK_ROWS
    if pad:
        x = np.vstack([x, np.zeros((pad, x.shape[1]))])
    out = [_block_logits(theta, x[i:i + BLOCK_ROWS]) for i in range(0, len(x), BLOCK_ROWS)]
    return np.concatenate(out)[:n]


def mlp_forward(theta: MLPWeights, x: np.ndarray, training: bool = False,
                rng: None | np.random.Generator = None) -> np.ndarray:
    """Confidence c in [0, 1] per input row; dropout only when training"""
    return expit(mlp_logits(theta, x, training, rng))


def loss_and_gradient(theta: MLPWeights, x: np.ndarray, y: np.ndarray,
                      rng: None | np.random.Generator = None) -> tuple[float, MLPWeights]:
    """
    Mean binary cross-entropy of the batch and its gradient (same layout as
    theta). Dropout is applied when a generator is given.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = len(x)
    last = len(theta.weights) - 1
    keep = 1.0 - theta.dropout

    inputs = []
    masks = []
    h = x
    for k, (w, b) in enumerate(zip(theta.weights, theta.biases)):
        inputs.append(h)
        z = h @ w + b
        if k < last:
            mask = (z > 0).astype(float)
            if rng is not None and theta.dropout > 0:
                mask *= (rng.random(z.shape) < keep) / keep
            masks.append(mask)
            h = z * mask
        else:
            h = z
    logits = h[:, 0]

    # log(1 + e^z) - y z, stable for both signs
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))

    grad_w = [np.empty(0)] * len(theta.weights)
    grad_b = [np.empty(0)] * len(theta.biases)
    delta = ((expit(logits) - y) / n)[:, None]
    for k in range(last, -1, -1):
        grad_w[k] = inputs[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ theta.weights[k].T) * masks[k - 1]

    return loss, MLPWeights(grad_w, grad_b, theta.dropout)


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def adam_init(theta: MLPWeights) -> AdamState:
    return AdamState([np.zeros_like(p) for p in theta.params()],
                     [np.zeros_like(p) for p in theta.params()])


def adam_step(theta: MLPWeights, grad: MLPWeights, state: AdamState, learning_rate: float,
              betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> tuple[MLPWeights, AdamState]:
    """Bias-corrected Adam update; returns new parameters and state"""
    b1, b2 = betas
    t = state.t + 1
    params = theta.params()
    grads = grad.params()

    m = [b1 * mk + (1 - b1) * g for mk, g in zip(state.m, grads)]
    v = [b2 * vk + (1 - b2) * g * g for vk, g in zip(state.v, grads)]
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    new = [p - learning_rate * (mk / c1) / (np.sqrt(vk / c2) + eps)
           for p, mk, vk in zip(params, m, v)]

    n = len(theta.weights)
    return MLPWeights(new[:n], new[n:], theta.dropout), AdamState(m, v, t)
