"""Minimal dense nets with explicit forward/backward passes and Adam.

No autograd: gradients are hand-derived so they can be checked against finite
differences.  Parameters are plain float64 numpy arrays.
"""

from __future__ import annotations

import json
import math

import numpy as np


class NumericError(RuntimeError):
    """A forward pass produced a non-finite activation."""


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inv(y):
    # x with softplus(x) = y, y > 0
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MLP:
    """Fully connected ReLU net with a linear head.

    sizes = (in, hidden..., out).  params alternate [W1, b1, W2, b2, ...],
    W of shape (fan_out, fan_in).  forward returns (out, cache); backward
    consumes the cache and the loss gradient w.r.t. the output.
    """

    def __init__(self, sizes, rng: np.random.Generator, final_zero: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.params = []
        n_layers = len(self.sizes) - 1
        for li, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            w = rng.standard_normal((fo, fi)) * math.sqrt(2.0 / fi)
            if final_zero and li == n_layers - 1:
                w = np.zeros((fo, fi))
            self.params.append(w)
            self.params.append(np.zeros(fo))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x, check: bool = False):
        """x: (B, in) or (in,).  Returns (out matching x's batch shape, cache)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        acts = [h]
        for li in range(self.n_layers):
            w = self.params[2 * li]
            b = self.params[2 * li + 1]
            h = h @ w.T + b
            if li < self.n_layers - 1:
                h = np.maximum(h, 0.0)
            if check and not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activation at layer {li}")
            acts.append(h)
        out = h[0] if squeeze else h
        return out, (acts, squeeze)

    def backward(self, cache, grad_out):
        """Returns (grads aligned with params, gradient w.r.t. the input)."""
        acts, squeeze = cache
        g = np.asarray(grad_out, dtype=float)
        if squeeze:
            g = g[None, :]
        grads = [None] * len(self.params)
        for li in range(self.n_layers - 1, -1, -1):
            w = self.params[2 * li]
            a_in = acts[li]
            if li < self.n_layers - 1:
                # acts[li+1] is the post-ReLU output of this layer
                g = g * (acts[li + 1] > 0.0)
            grads[2 * li] = g.T @ a_in
            grads[2 * li + 1] = g.sum(axis=0)
            g = g @ w
        return grads, (g[0] if squeeze else g)

    def copy_params(self):
        return [p.copy() for p in self.params]

    def set_params(self, params):
        for dst, src in zip(self.params, params):
            dst[...] = src


class Adam:
    """Standard Adam with bias correction; operates in-place on a param list."""

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ---------------------------------------------------------------------------
# flat checkpoint container: one JSON header line, then raw little-endian
# float64 bytes for every array in declared order

def save_flat(path, kind: str, arrays: dict, meta: dict):
    names = list(arrays.keys())
    header = {
        "kind": kind,
        "arrays": [[n, list(np.asarray(arrays[n]).shape)] for n in names],
        "meta": meta,
    }
    blob = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes()
                    for n in names)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def load_flat(path):
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    out = {}
    off = 0
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        out[name] = arr.astype(float)
        off += n * 8
    return header["kind"], header["meta"], out
