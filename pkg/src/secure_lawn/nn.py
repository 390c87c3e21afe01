"""Minimal float64 multilayer perceptron with hand-written backprop, plus Adam."""

from __future__ import annotations

import numpy as np

from secure_lawn._validation import InputError


class Mlp:
    """ReLU hidden layers, linear output. Weights are stored ``(fan_in, fan_out)``."""

    def __init__(self, sizes, rng: np.random.Generator | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise InputError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                self.weights.append(np.zeros((fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x: np.ndarray, keep: bool = False):
        """Return the output (and the activation cache when ``keep``)."""
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.sizes[0]:
            raise InputError(f"expected input width {self.sizes[0]}, got {h.shape[-1]}")
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if keep:
                cache.append((h, z))
            h = z if i == last else np.maximum(z, 0.0)
        return (h, cache) if keep else h

    __call__ = forward

    def backward(self, cache, grad_out: np.ndarray, need_input_grad: bool = False, need_param_grads: bool = True):
        """Backprop ``grad_out`` (dL/d output); returns (param grads, dL/d input)."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        g = grad_out
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h, z = cache[i]
            if i != last:
                g = g * (z > 0.0)
            if need_param_grads:
                grads[2 * i] = h.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or need_input_grad:
                g = g @ self.weights[i].T
        return grads, (g if need_input_grad else None)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            w, b = state[f"w{i}"], state[f"b{i}"]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise InputError(f"layer {i} shape mismatch in checkpoint")
            # in place so optimizers keep referencing the same arrays
            self.weights[i][...] = w
            self.biases[i][...] = b


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Polyak averaging in place: ``target <- (1 - tau) target + tau online``."""
    if not 0.0 < tau <= 1.0:
        raise InputError(f"tau must lie in (0, 1], got {tau}")
    if target.sizes != online.sizes:
        raise InputError("target/online shapes differ")
    for t, o in zip(target.params, online.params):
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o
    return target


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise InputError("learning rate must be > 0")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
