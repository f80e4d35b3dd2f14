"""Minimal fully-connected network with hand-written backprop and Adam.

Hidden layers use the rectifier, the output layer is linear. Weights are
float64 throughout; initialization is uniform fan-in scaled and seeded.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensorio

CHECKPOINT_VERSION = 1


class Mlp:
    def __init__(self, layer_sizes: tuple[int, ...], seed: int = 0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layers")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a single vector (d,) or a batch (B, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.input_size:
            raise ValueError(f"input width {h.shape[1]} != expected {self.input_size}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    def backward(self, x: np.ndarray, grad_q: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(q * grad_q) w.r.t. every parameter.

        Recomputes the forward activations internally; never mutates weights.
        Batched inputs accumulate gradients over the batch.
        """
        x = np.asarray(x, dtype=np.float64)
        grad_q = np.asarray(grad_q, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
            grad_q = grad_q.reshape(1, -1)
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)

        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        g = grad_q
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0.0)
        return grads

    def clone(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_sizes = self.layer_sizes
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def copy_from(self, other: "Mlp"):
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer size mismatch")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src


class AdamState:
    """Bias-corrected Adam moments for one parameter list."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_update(opt: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One in-place Adam step over matching parameter/gradient lists."""
    if len(params) != len(opt.m) or len(params) != len(grads):
        raise ValueError("parameter/gradient count mismatch")
    opt.t += 1
    bc1 = 1.0 - opt.beta1**opt.t
    bc2 = 1.0 - opt.beta2**opt.t
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)


def save_checkpoint(net: Mlp, path: str | Path, extra_meta: dict | None = None):
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
    }
    if extra_meta:
        meta.update(extra_meta)
    tensorio.save_bundle(path, arrays, meta)


def load_checkpoint(path: str | Path) -> tuple[Mlp, dict]:
    arrays, meta = tensorio.load_bundle(path)
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    sizes = tuple(int(s) for s in meta["layer_sizes"])
    net = Mlp.__new__(Mlp)
    net.layer_sizes = sizes
    net.weights = [arrays[f"w{i}"] for i in range(len(sizes) - 1)]
    net.biases = [arrays[f"b{i}"] for i in range(len(sizes) - 1)]
    return net, meta
