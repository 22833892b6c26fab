"""Small dense networks with hand-written reverse-mode gradients.

Only what the Q networks, actor and critic need: ReLU hidden layers, a linear
or tanh output, SGD/Adam, hard and soft parameter copies, and a flat binary
checkpoint format.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import kernels

CKPT_MAGIC = b"IRSMLP01"
_ACTIVATIONS = ("linear", "tanh")


class Mlp:
    """Feed-forward net ``sizes[0] -> ... -> sizes[-1]``.

    Weights are stored as (fan_in, fan_out) so a batch ``x`` of shape
    (n, fan_in) maps through ``x @ W + b``.
    """

    def __init__(self, sizes, output: str = "linear", rng=None, dtype=np.float64):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if output not in _ACTIVATIONS:
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = sizes
        self.output = output
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng() if rng is None else rng
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)).astype(self.dtype))
            self.biases.append(rng.uniform(-lim, lim, fan_out).astype(self.dtype))

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def architecture(self):
        return self.sizes, self.output, self.dtype.str

    def forward(self, x):
        """Return (output, cache). A 1-D input gives a 1-D output."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
            elif self.output == "tanh":
                np.tanh(h, out=h)
            acts.append(h)
        cache = (acts, single)
        return (h[0] if single else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, input_grad=False):
        """Reverse pass.

        Args:
            cache: second return value of :meth:`forward`.
            grad_out: d(loss)/d(output), same shape as the forward output.
            input_grad: False, True, or a slice selecting input columns whose
                gradient is wanted (saves work when only part is needed).

        Returns:
            (grads, dx). ``grads`` follows :attr:`params` order; ``dx`` is None
            unless requested.
        """
        if cache is None:
            raise ValueError("backward() needs the cache from forward()")
        acts, single = cache
        g = np.asarray(grad_out, dtype=self.dtype)
        g = g[None, :] if single else g
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * (2 * len(self.weights))
        dx = None
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
            elif input_grad is not False:
                w = self.weights[0] if input_grad is True else self.weights[0][input_grad]
                dx = g @ w.T
                if single:
                    dx = dx[0]
        return grads, dx

    def input_gradient(self, cache, grad_out, cols=None):
        """d(output . grad_out)/d(input) without forming parameter gradients."""
        acts, single = cache
        g = np.asarray(grad_out, dtype=self.dtype)
        g = g[None, :] if single else g
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        for i in range(len(self.weights) - 1, 0, -1):
            g = (g @ self.weights[i].T) * (acts[i] > 0)
        w = self.weights[0] if cols is None else self.weights[0][cols]
        dx = g @ w.T
        return dx[0] if single else dx

    def clone(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes, twin.output, twin.dtype = self.sizes, self.output, self.dtype
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def save(self, path) -> None:
        """Flat binary: magic, layer count, sizes, activation, then float64 params in layer order."""
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<q", len(self.sizes)))
            fh.write(struct.pack(f"<{len(self.sizes)}q", *self.sizes))
            fh.write(struct.pack("<qq", _ACTIVATIONS.index(self.output), self.dtype.itemsize))
            for p in self.params:
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Mlp":
        raw = Path(path).read_bytes()
        if raw[:8] != CKPT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        off = 8
        (n,) = struct.unpack_from("<q", raw, off)
        off += 8
        sizes = struct.unpack_from(f"<{n}q", raw, off)
        off += 8 * n
        act, itemsize = struct.unpack_from("<qq", raw, off)
        off += 16
        net = cls(sizes, _ACTIVATIONS[act], np.random.default_rng(0), {4: np.float32, 8: np.float64}[itemsize])
        for p in net.params:
            vals = np.frombuffer(raw, dtype="<f8", count=p.size, offset=off)
            off += 8 * p.size
            p[...] = vals.reshape(p.shape)
        if off != len(raw):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
        return net


def check_finite(arrays, what: str = "parameters") -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite {what}")


def clip_by_global_norm(grads, max_norm):
    """Rescale `grads` in place so their joint L2 norm is at most `max_norm`.

    None disables clipping. Returns the same list for chaining.
    """
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    for g in grads:
        g *= scale
    return grads


class Optimizer:
    """SGD or Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params, kind: str = "adam", lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        if kind == "adam":
            self.m = [np.zeros_like(p) for p in self.params]
            self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for p, g in zip(self.params, grads):
            if p.shape != np.shape(g):
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        # one scalar reduction per array is enough to catch inf/nan anywhere
        check_finite([sum(float(np.sum(g)) for g in grads)], "gradients")
        self.t += 1
        finite = True
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.lr * g
            finite = np.isfinite(sum(float(np.sum(p)) for p in self.params))
        else:
            for p, g, m, v in zip(self.params, grads, self.m, self.v):
                finite &= kernels.adam_update(p, g, m, v, self.lr, self.beta1, self.beta2, self.t, self.eps)
        if not finite:
            raise FloatingPointError("non-finite parameters after update")


def _check_same(src: Mlp, dst: Mlp):
    if src.sizes != dst.sizes or src.output != dst.output:
        raise ValueError(f"architecture mismatch {src.sizes}/{src.output} vs {dst.sizes}/{dst.output}")


def copy_parameters(src: Mlp, dst: Mlp) -> None:
    """Hard copy src -> dst (storage stays distinct)."""
    _check_same(src, dst)
    for s, d in zip(src.params, dst.params):
        np.copyto(d, s)


def soft_update(src: Mlp, dst: Mlp, tau: float) -> None:
    """Polyak averaging: dst <- tau * src + (1 - tau) * dst."""
    _check_same(src, dst)
    for s, d in zip(src.params, dst.params):
        d *= 1.0 - tau
        d += tau * s
