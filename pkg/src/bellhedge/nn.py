"""Small numpy MLPs with hand-written backprop.

Networks here are tiny (a few thousand parameters), so plain numpy is fast
enough and keeps every gradient inspectable.  A Buehler-zero approximator is
``N(theta; x) - N(theta0; x)`` with ``theta0`` a frozen copy of the initial
weights: it outputs exactly zero at initialisation yet has the gradients of a
randomly initialised network.
"""

from __future__ import annotations

import base64
import copy
from dataclasses import dataclass, field

import numpy as np

from .rng import keyed_rng

ACTIVATIONS = ("relu", "softplus", "tanh")


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "softplus":
        return np.logaddexp(0.0, x)
    if name == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {name!r}")


def _dact(name, x, y):
    if name == "relu":
        return (x > 0.0).astype(float)
    if name == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * x))  # logistic sigmoid without overflow
    return 1.0 - y * y


class MLP:
    """Feed-forward net with a linear output layer."""

    def __init__(self, layer_sizes, activation="softplus", params=None):
        if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
            raise ValueError(f"invalid layer sizes {layer_sizes}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.activation = activation
        self.params = params if params is not None else [(np.zeros((a, b)), np.zeros(b)) for a, b in zip(self.layer_sizes, self.layer_sizes[1:])]

    @classmethod
    def random(cls, layer_sizes, activation, rng):
        net = cls(layer_sizes, activation)
        params = []
        for a, b in zip(net.layer_sizes, net.layer_sizes[1:]):
            scale = np.sqrt(2.0 / a) if activation == "relu" else np.sqrt(1.0 / a)
            params.append((scale * rng.standard_normal((a, b)), 0.1 * rng.standard_normal(b)))
        net.params = params
        return net

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in self.params)

    def copy(self):
        return MLP(self.layer_sizes, self.activation, [(W.copy(), b.copy()) for W, b in self.params])

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x[None, :] if single else x
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input has {x.shape[1]} features, network expects {self.layer_sizes[0]}")
        return x, single

    def forward_cache(self, x):
        h = x
        cache = []
        last = len(self.params) - 1
        for i, (W, b) in enumerate(self.params):
            pre = h @ W + b
            out = pre if i == last else _act(self.activation, pre)
            cache.append((h, pre, out))
            h = out
        return h, cache

    def __call__(self, x):
        x, single = self._as_batch(x)
        out = self.forward_cache(x)[0]
        return out[0] if single else out

    def backward(self, cache, grad_out):
        """Parameter gradients and input gradient for ``sum(grad_out * out)``."""
        grads = [None] * len(self.params)
        g = grad_out
        last = len(self.params) - 1
        for i in reversed(range(len(self.params))):
            h, pre, out = cache[i]
            if i != last:
                g = g * _dact(self.activation, pre, out)
            W, _ = self.params[i]
            grads[i] = (h.T @ g, g.sum(axis=0))
            g = g @ W.T
        return grads, g

    def flat(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.params])

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError("parameter vector has the wrong length")
        i = 0
        params = []
        for W, b in self.params:
            w = theta[i:i + W.size].reshape(W.shape)
            i += W.size
            params.append((w.copy(), theta[i:i + b.size].copy()))
            i += b.size
        self.params = params


def flatten_grads(grads):
    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


@dataclass
class Normalizer:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=float)
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 1e-8, sd, 1.0))

    def __call__(self, x):
        return (x - self.shift) / self.scale

    def to_dict(self):
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["shift"], dtype=float), np.asarray(d["scale"], dtype=float))


class Approximator:
    """``out = T(N(theta; n(x)) - N(theta0; n(x)))`` with optional bounded output.

    ``n`` is a fixed input normaliser and ``T`` is either the identity or
    ``bound * tanh``.  Without a frozen copy the network is used as is.
    """

    def __init__(self, net: MLP, frozen: MLP | None = None, normalizer: Normalizer | None = None, bound: float | None = None):
        self.net = net
        self.frozen = frozen
        self.normalizer = normalizer or Normalizer.identity(net.layer_sizes[0])
        self.bound = bound

    @property
    def layer_sizes(self):
        return self.net.layer_sizes

    @property
    def n_params(self):
        return self.net.n_params

    def copy(self):
        return Approximator(self.net.copy(), None if self.frozen is None else self.frozen.copy(), copy.deepcopy(self.normalizer), self.bound)

    def forward_cache(self, x):
        x = np.asarray(x, dtype=float)
        xn = self.normalizer(x)
        raw, cache = self.net.forward_cache(xn)
        fcache = None
        if self.frozen is not None:
            base, fcache = self.frozen.forward_cache(xn)
            raw = raw - base
        out = raw if self.bound is None else self.bound * np.tanh(raw)
        return out, (cache, fcache, raw)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if x.shape[-1] != self.layer_sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, approximator expects {self.layer_sizes[0]}")
        out = self.forward_cache(x[None, :] if single else x)[0]
        return out[0] if single else out

    def backward(self, state, grad_out, need_input=False):
        cache, fcache, raw = state
        g = grad_out if self.bound is None else grad_out * self.bound * (1.0 - np.tanh(raw) ** 2)
        grads, gin = self.net.backward(cache, g)
        if not need_input:
            return grads, None
        if self.frozen is not None:
            _, gin0 = self.frozen.backward(fcache, g)
            gin = gin - gin0
        return grads, gin / self.normalizer.scale

    def flat(self):
        return self.net.flat()

    def set_flat(self, theta):
        self.net.set_flat(theta)

    def to_dict(self):
        return {
            "layer_sizes": self.layer_sizes,
            "activation": self.net.activation,
            "bound": self.bound,
            "normalizer": self.normalizer.to_dict(),
            "params": encode_array(self.net.flat()),
            "frozen": None if self.frozen is None else encode_array(self.frozen.flat()),
        }

    @classmethod
    def from_dict(cls, d):
        net = MLP(d["layer_sizes"], d["activation"])
        net.set_flat(decode_array(d["params"]))
        frozen = None
        if d.get("frozen") is not None:
            frozen = MLP(d["layer_sizes"], d["activation"])
            frozen.set_flat(decode_array(d["frozen"]))
        return cls(net, frozen, Normalizer.from_dict(d["normalizer"]), d.get("bound"))


def forward(appr: Approximator, x):
    return appr(x)


def buehler_zero_init(layer_sizes, seed, activation="softplus", normalizer=None, bound=None, key="net") -> Approximator:
    """Random network paired with its frozen initial copy; output is 0 at init."""
    net = MLP.random(layer_sizes, activation, keyed_rng(seed, "init", key))
    return Approximator(net, net.copy(), normalizer, bound)


def encode_array(a):
    return base64.b64encode(np.asarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(s):
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(float)


@dataclass
class Momentum:
    """Heavy-ball gradient step; ``sign=+1`` ascends, ``-1`` descends."""

    lr: float
    mu: float = 0.9
    velocity: list = field(default_factory=list)

    def step(self, appr: Approximator, grads, sign=1.0, lr=None):
        lr = self.lr if lr is None else lr
        if not self.velocity:
            self.velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in appr.net.params]
        new_params, new_vel = [], []
        for (W, b), (vW, vb), (gW, gb) in zip(appr.net.params, self.velocity, grads):
            vW = self.mu * vW + sign * gW
            vb = self.mu * vb + sign * gb
            new_vel.append((vW, vb))
            new_params.append((W + lr * vW, b + lr * vb))
        appr.net.params = new_params
        self.velocity = new_vel


@dataclass
class Adam:
    """Adam step with bias correction; same calling convention as :class:`Momentum`."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, appr: Approximator, grads, sign=1.0, lr=None):
        lr = self.lr if lr is None else lr
        if not self.m:
            self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in appr.net.params]
            self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in appr.net.params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        new_params, new_m, new_v = [], [], []
        for (W, b), (mW, mb), (vW, vb), (gW, gb) in zip(appr.net.params, self.m, self.v, grads):
            mW = self.beta1 * mW + (1.0 - self.beta1) * gW
            mb = self.beta1 * mb + (1.0 - self.beta1) * gb
            vW = self.beta2 * vW + (1.0 - self.beta2) * gW * gW
            vb = self.beta2 * vb + (1.0 - self.beta2) * gb * gb
            new_m.append((mW, mb))
            new_v.append((vW, vb))
            new_params.append((W + sign * lr * (mW / c1) / (np.sqrt(vW / c2) + self.eps), b + sign * lr * (mb / c1) / (np.sqrt(vb / c2) + self.eps)))
        appr.net.params = new_params
        self.m, self.v = new_m, new_v


def clip_grads(grads, max_norm):
    """Rescale ``grads`` so their joint Euclidean norm is at most ``max_norm``."""
    if max_norm is None:
        return grads
    norm = float(np.sqrt(sum(np.sum(gW * gW) + np.sum(gb * gb) for gW, gb in grads)))
    if norm <= max_norm or norm == 0.0:
        return grads
    s = max_norm / norm
    return [(gW * s, gb * s) for gW, gb in grads]
