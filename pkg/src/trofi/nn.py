"""Minimal dense-network core: forward, exact backward, Adam, soft updates.

Everything runs in float64 with explicit loops over layers, so gradients can
be checked against central finite differences and whole training runs are
bit-reproducible for a fixed seed.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Rng:
    """Deterministic random stream addressed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        # SeedSequence wants non-negative entropy; seeds may be any int.
        entropy = self.seed % (2 ** 63)
        seq = np.random.SeedSequence(entropy, spawn_key=(self.stream_id,))
        return np.random.default_rng(seq)

    def child(self, k: int) -> "Rng":
        # Distinct children per k; good enough for the shallow derivation
        # trees used here (run seed -> episode / batch / noise streams).
        return Rng(self.seed, self.stream_id * 1_000_003 + k + 1)


@dataclass
class Mlp:
    """Fully-connected network; weights[i] has shape (fan_in, fan_out)."""

    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
        )


@dataclass
class Gradients:
    """Parameter gradients plus the gradient w.r.t. the batch input."""

    weights: list
    biases: list
    inputs: np.ndarray


def init(layer_sizes, rng: Rng, hidden_activation="relu", output_activation="identity") -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic per rng."""
    if len(layer_sizes) < 2:
        raise ConfigError(f"need at least input and output layer, got {layer_sizes}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ConfigError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigError(f"unknown output activation {output_activation!r}")
    gen = rng.generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(gen.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_sizes), weights, biases, hidden_activation, output_activation)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z  # identity


def _activate_grad(z, a, kind):
    # derivative expressed via pre-activation z and activation a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _check_batch(mlp, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {x.shape}")
    if x.shape[1] != mlp.in_dim:
        raise ShapeError(f"input width {x.shape[1]} != first layer size {mlp.in_dim}")
    return x


def _forward_cached(mlp, x):
    """Returns (activations, pre_activations); activations[0] is the input."""
    acts = [x]
    pres = []
    n_layers = len(mlp.weights)
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = acts[-1] @ w + b
        kind = mlp.output_activation if i == n_layers - 1 else mlp.hidden_activation
        pres.append(z)
        acts.append(_activate(z, kind))
    return acts, pres


def forward(mlp: Mlp, batch) -> np.ndarray:
    """Affine + activation composition over a (B, in_dim) batch."""
    x = _check_batch(mlp, batch)
    acts, _ = _forward_cached(mlp, x)
    return acts[-1]


def backward(mlp: Mlp, batch, upstream) -> Gradients:
    """Exact reverse-mode gradients of sum(outputs * upstream).

    upstream has shape (B, out_dim); returns gradients for every weight and
    bias plus the gradient w.r.t. the input batch.
    """
    x = _check_batch(mlp, batch)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != (x.shape[0], mlp.out_dim):
        raise ShapeError(f"upstream shape {g.shape} != {(x.shape[0], mlp.out_dim)}")
    acts, pres = _forward_cached(mlp, x)
    n_layers = len(mlp.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = g * _activate_grad(pres[-1], acts[-1], mlp.output_activation)
    for i in range(n_layers - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        delta = delta @ mlp.weights[i].T
        if i > 0:
            delta = delta * _activate_grad(pres[i - 1], acts[i], mlp.hidden_activation)
    return Gradients(gw, gb, delta)


@dataclass
class AdamState:
    """Adam moments; shapes mirror the network parameters."""

    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m_weights: list = field(default_factory=list)
    v_weights: list = field(default_factory=list)
    m_biases: list = field(default_factory=list)
    v_biases: list = field(default_factory=list)


def adam_init(mlp: Mlp, learning_rate=3e-4, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        step=0,
        m_weights=[np.zeros_like(w) for w in mlp.weights],
        v_weights=[np.zeros_like(w) for w in mlp.weights],
        m_biases=[np.zeros_like(b) for b in mlp.biases],
        v_biases=[np.zeros_like(b) for b in mlp.biases],
    )


def adam_step(mlp: Mlp, grads: Gradients, state: AdamState):
    """One bias-corrected Adam update, in place; returns (mlp, state)."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for params, gs, ms, vs in (
        (mlp.weights, grads.weights, state.m_weights, state.v_weights),
        (mlp.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return mlp, state


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau * online + (1 - tau) * target, element-wise, in place."""
    if target.layer_sizes != online.layer_sizes:
        raise ShapeError(f"architecture mismatch: {target.layer_sizes} vs {online.layer_sizes}")
    for tp, op in zip(target.weights + target.biases, online.weights + online.biases):
        tp *= 1.0 - tau
        tp += tau * op
    return target


def to_checkpoint(mlp: Mlp) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(mlp.layer_sizes),
        "activations": [mlp.hidden_activation, mlp.output_activation],
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }


def from_checkpoint(blob: dict) -> Mlp:
    return Mlp(
        layer_sizes=list(blob["layer_sizes"]),
        weights=[np.asarray(w, dtype=np.float64) for w in blob["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in blob["biases"]],
        hidden_activation=blob["activations"][0],
        output_activation=blob["activations"][1],
    )


def save_mlp(mlp: Mlp, path):
    with open(path, "w") as f:
        json.dump(to_checkpoint(mlp), f)


def load_mlp(path) -> Mlp:
    with open(path) as f:
        return from_checkpoint(json.load(f))
