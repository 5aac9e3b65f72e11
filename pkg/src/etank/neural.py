"""Small dense networks with manual backprop and Adam, float64 numpy.

Layout: weights[i] has shape (fan_in, fan_out), activations are relu on
hidden layers and identity on the output.  forward() returns a cache that
backward() consumes; the cache is tied to the parameter version so a
backward pass against parameters that moved since the forward raises
instead of silently producing wrong gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Mlp",
    "Cache",
    "ParamGrads",
    "ScalarAdam",
    "init_mlp",
    "forward",
    "backward",
    "adam_step",
    "soft_update",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Mlp:
    weights: list
    biases: list
    # Adam first/second moments, one pair per parameter array
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    adam_t: int = 0
    version: int = 0  # bumped on every parameter write

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameter_arrays(self) -> list:
        return list(self.weights) + list(self.biases)

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameter_arrays())

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            m_w=[m.copy() for m in self.m_w],
            v_w=[v.copy() for v in self.v_w],
            m_b=[m.copy() for m in self.m_b],
            v_b=[v.copy() for v in self.v_b],
            adam_t=self.adam_t,
            version=self.version,
        )


class Cache(NamedTuple):
    net_id: int
    version: int
    inputs: list  # layer inputs a_0 .. a_{L-1}
    masks: list  # relu masks for hidden layers


class ParamGrads(NamedTuple):
    d_weights: list
    d_biases: list


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, output_scale: float = 1.0) -> Mlp:
    """Uniform +-1/sqrt(fan_in) init; output layer additionally scaled."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[i])
        w = rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1]))
        b = rng.uniform(-bound, bound, size=sizes[i + 1])
        if i == len(sizes) - 2:
            w *= output_scale
            b *= output_scale
        weights.append(w)
        biases.append(b)
    net = Mlp(weights=weights, biases=biases)
    net.m_w = [np.zeros_like(w) for w in weights]
    net.v_w = [np.zeros_like(w) for w in weights]
    net.m_b = [np.zeros_like(b) for b in biases]
    net.v_b = [np.zeros_like(b) for b in biases]
    return net


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.weights[0].shape[0]:
        raise ValueError(
            f"input shape {x.shape} does not feed a first layer of "
            f"shape {net.weights[0].shape}"
        )
    inputs = [x]
    masks = []
    h = x
    last = net.n_layers - 1
    for i in range(net.n_layers):
        z = h @ net.weights[i] + net.biases[i]
        if i < last:
            mask = z > 0.0
            h = z * mask
            masks.append(mask)
            inputs.append(h)
        else:
            h = z
    return h, Cache(id(net), net.version, inputs, masks)


def backward(net: Mlp, cache: Cache, grad_out: np.ndarray) -> tuple[np.ndarray, ParamGrads]:
    """Returns (gradient wrt input, gradients wrt parameters).

    grad_out carries any loss scaling (e.g. 1/batch) already.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise ValueError("stale cache: parameters changed since forward()")
    dz = np.asarray(grad_out, dtype=np.float64)
    if dz.shape[0] != cache.inputs[0].shape[0] or dz.shape[1] != net.biases[-1].shape[0]:
        raise ValueError(f"grad_out shape {dz.shape} mismatches forward batch")
    d_weights = [None] * net.n_layers
    d_biases = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        d_weights[i] = cache.inputs[i].T @ dz
        d_biases[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ net.weights[i].T) * cache.masks[i - 1]
        else:
            dz = dz @ net.weights[i].T
    return dz, ParamGrads(d_weights, d_biases)


def adam_step(net: Mlp, grads: ParamGrads, lr: float) -> None:
    """In-place Adam with bias correction; bumps the parameter version."""
    net.adam_t += 1
    t = net.adam_t
    corr1 = 1.0 - ADAM_BETA1**t
    corr2 = 1.0 - ADAM_BETA2**t
    for p, g, m, v in zip(
        net.weights + net.biases,
        grads.d_weights + grads.d_biases,
        net.m_w + net.m_b,
        net.v_w + net.v_b,
    ):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)
    net.version += 1


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    for tp, sp in zip(
        target.weights + target.biases, source.weights + source.biases
    ):
        tp *= 1.0 - tau
        tp += tau * sp
    target.version += 1


@dataclass
class ScalarAdam:
    """Adam on a single scalar, used for the entropy temperature."""

    value: float
    m: float = 0.0
    v: float = 0.0
    t: int = 0

    def step(self, grad: float, lr: float) -> None:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1.0 - ADAM_BETA1**self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2**self.t)
        self.value -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
