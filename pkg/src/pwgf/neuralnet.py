"""Tiny scalar-input MLP with hand-written backprop and Adam.

The net maps a real z to w(z) in (0, 1): tanh hidden layers, sigmoid output.
Everything is vectorized over a batch of inputs of shape (B,).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import RngStream
from .errors import NumericError

DEFAULT_SIZES = (1, 32, 32, 1)


@dataclass(frozen=True)
class Mlp:
    weights: tuple  # each (fan_out, fan_in)
    biases: tuple   # each (fan_out,)

    @property
    def sizes(self):
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def params(self):
        return list(self.weights) + list(self.biases)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def __call__(self, z):
        return mlp_forward(self, z)[0]


@dataclass(frozen=True)
class Cache:
    sizes: tuple
    inputs: tuple    # layer inputs h_0 .. h_{L-1}, each (B, fan_in)
    output: np.ndarray


@dataclass(frozen=True)
class Grads:
    weights: tuple
    biases: tuple

    def __add__(self, other: "Grads") -> "Grads":
        return Grads(tuple(a + b for a, b in zip(self.weights, other.weights)),
                     tuple(a + b for a, b in zip(self.biases, other.biases)))


def init_mlp(rng: RngStream, sizes=DEFAULT_SIZES) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    gen = rng.generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(gen.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(weights), tuple(biases))


def zeros_like_mlp(sizes=DEFAULT_SIZES) -> Mlp:
    return Mlp(tuple(np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])),
               tuple(np.zeros(o) for o in sizes[1:]))


_W_LO = np.finfo(float).tiny
_W_HI = np.nextafter(1.0, 0.0)


def _sigmoid(a):
    # clipped so w stays strictly inside (0, 1) even for saturated inputs
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * a)), _W_LO, _W_HI)


def mlp_forward(net: Mlp, z):
    """Return (w, cache); ``w`` has the shape of ``z``."""
    z_arr = np.asarray(z, dtype=float)
    h = z_arr.reshape(-1, 1)
    inputs = []
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ W.T + b
        h = _sigmoid(a) if i == last else np.tanh(a)
    w = h[:, 0]
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite discriminator output")
    out = w.reshape(z_arr.shape) if z_arr.ndim else float(w[0])
    return out, Cache(net.sizes, tuple(inputs), w)


def mlp_backward(net: Mlp, cache: Cache, upstream):
    """Gradients of sum_b upstream_b * w(z_b) w.r.t. weights and each z_b.

    Returns ``(grads, dz)`` with ``dz`` shaped like the forward input batch.
    """
    if cache.sizes != net.sizes:
        raise ValueError(f"cache from a {cache.sizes} net used with a {net.sizes} net")
    w = cache.output
    up = np.broadcast_to(np.asarray(upstream, dtype=float), w.shape)
    delta = (up * w * (1.0 - w))[:, None]
    dws, dbs = [], []
    for i in range(len(net.weights) - 1, -1, -1):
        h = cache.inputs[i]
        dws.append(delta.T @ h)
        dbs.append(delta.sum(axis=0))
        delta = delta @ net.weights[i]
        if i > 0:
            delta = delta * (1.0 - h**2)
    dz = delta[:, 0]
    return Grads(tuple(reversed(dws)), tuple(reversed(dbs))), dz


@dataclass
class OptState:
    """Adam moment estimates for every weight and bias array."""

    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-3, **kwargs) -> "OptState":
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls(zeros, [z.copy() for z in zeros], lr=lr, **kwargs)


def opt_step(net: Mlp, grads: Grads, state: OptState):
    """One Adam descent step; returns ``(new_net, new_state)``."""
    params = net.params()
    gs = list(grads.weights) + list(grads.biases)
    if len(gs) != len(params) or any(g.shape != p.shape for g, p in zip(gs, params)):
        raise ValueError("gradient shapes do not match the network")
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("optimizer state does not match the network")
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    k = len(net.weights)
    new_net = Mlp(tuple(new_p[:k]), tuple(new_p[k:]))
    new_state = OptState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_net, new_state
