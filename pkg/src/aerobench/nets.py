"""Small fully-connected networks with hand-written backprop.

Only what the actor-critic needs: tanh hidden layers, linear output,
orthogonal initialization, and an Adam optimizer over lists of parameter
arrays.  Gradients are checked against finite differences in the tests.
"""

from __future__ import annotations

import numpy as np


def orthogonal(shape, gain, rng) -> np.ndarray:
    """Orthogonal weight init (SVD of a Gaussian draw), scaled by gain."""
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == shape else vt
    return gain * q


class Mlp:
    """input -> tanh hidden layers -> linear output, x @ w + b convention."""

    def __init__(self, sizes, rng, out_gain=1.0, hidden_gain=np.sqrt(2.0)):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for i in range(len(sizes) - 1):
            gain = out_gain if i == len(sizes) - 2 else hidden_gain
            self.weights.append(orthogonal((sizes[i], sizes[i + 1]), gain, rng))
            self.biases.append(np.zeros(sizes[i + 1]))
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, flat: np.ndarray):
        """Load parameters from one flat vector (gradient checking helper)."""
        offset = 0
        for arr in self.params:
            arr[...] = flat[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        if offset != flat.size:
            raise ValueError("parameter vector size mismatch")

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass; caches activations for backward()."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [x]
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            a = np.tanh(z) if i < n_layers - 1 else z
            activations.append(a)
        self._cache = activations
        return activations[-1]

    def backward(self, dout: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients for the last forward pass.

        dout is dLoss/doutput with the output's shape; returns gradients
        aligned with ``params``.
        """
        if self._cache is None:
            raise RuntimeError("backward() before forward()")
        activations = self._cache
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.atleast_2d(np.asarray(dout, dtype=float))
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - activations[i] ** 2)
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.append(gw)
            out.append(gb)
        return out


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale the whole gradient list so its global l2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total
