"""Feedforward networks with hand-written reverse mode and Adam.

Weights are stored as (fan_in, fan_out) so a batch ``x`` of shape (B, in)
maps through ``x @ W + b``. A single vector input is treated as a batch of one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError

ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, y, g):
    # y is the activation output
    if name == "tanh":
        return g * (1.0 - y * y)
    if name == "relu":
        return g * (y > 0)
    return g


@dataclass
class Tape:
    inputs: list
    outputs: list
    version: int
    owner: int
    squeeze: bool


@dataclass
class Gradients:
    weights: list
    biases: list

    def arrays(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float((a * a).sum()) for a in self.arrays())))

    def scaled(self, c: float) -> "Gradients":
        return Gradients([w * c for w in self.weights], [b * c for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


class Mlp:
    def __init__(self, sizes, activations=None, rng=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least input and output widths")
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
            raise ValueError(f"need {n_layers} activations from {ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng()
        self.sizes = sizes
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.version = 0

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def forward(self, x):
        """Returns ``(output, tape)``; the tape feeds :meth:`backward`."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise UsageError(f"expected input width {self.input_size}, got shape {np.shape(x)}")
        inputs, outputs = [], []
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(h)
            h = _act(act, h @ w + b)
            outputs.append(h)
        out = h[0] if squeeze else h
        return out, Tape(inputs, outputs, self.version, id(self), squeeze)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape: Tape, output_grad) -> Gradients:
        """Parameter gradients of the scalar loss whose d(loss)/d(output) is ``output_grad``."""
        if tape.owner != id(self) or tape.version != self.version:
            raise UsageError("stale tape: parameters changed since the forward pass")
        g = np.asarray(output_grad, dtype=float)
        if tape.squeeze:
            g = g[None, :]
        if g.shape != tape.outputs[-1].shape:
            raise UsageError(f"output_grad shape {g.shape} does not match output {tape.outputs[-1].shape}")
        dws, dbs = [], []
        for layer in reversed(range(len(self.weights))):
            g = _act_grad(self.activations[layer], tape.outputs[layer], g)
            dws.append(tape.inputs[layer].T @ g)
            dbs.append(g.sum(axis=0))
            if layer:
                g = g @ self.weights[layer].T
        return Gradients(dws[::-1], dbs[::-1])

    def input_grad(self, tape: Tape, output_grad) -> np.ndarray:
        g = np.asarray(output_grad, dtype=float)
        if tape.squeeze:
            g = g[None, :]
        for layer in reversed(range(len(self.weights))):
            g = _act_grad(self.activations[layer], tape.outputs[layer], g)
            g = g @ self.weights[layer].T
        return g[0] if tape.squeeze else g

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.activations = list(self.activations)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.version = 0
        return other

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in self.parameters():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.parameters())

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "activations": self.activations,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = [int(s) for s in d["sizes"]]
        net.activations = list(d["activations"])
        net.weights = [
            np.array(w, dtype=float).reshape(fi, fo) for w, fi, fo in zip(d["weights"], net.sizes[:-1], net.sizes[1:])
        ]
        net.biases = [np.array(b, dtype=float) for b in d["biases"]]
        net.version = 0
        return net


@dataclass
class OptimizerState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, **kw) -> "OptimizerState":
        st = cls(**kw)
        st.m = [np.zeros_like(a) for a in net.parameters()]
        st.v = [np.zeros_like(a) for a in net.parameters()]
        return st

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "m": [a.ravel().tolist() for a in self.m],
            "v": [a.ravel().tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict, net: Mlp) -> "OptimizerState":
        shapes = [a.shape for a in net.parameters()]
        st = cls(d["lr"], d["beta1"], d["beta2"], d["eps"], int(d["step"]))
        st.m = [np.array(a, dtype=float).reshape(s) for a, s in zip(d["m"], shapes)]
        st.v = [np.array(a, dtype=float).reshape(s) for a, s in zip(d["v"], shapes)]
        return st


def adam_step(net: Mlp, grads: Gradients, opt: OptimizerState) -> None:
    """Bias-corrected Adam update of ``net`` in place."""
    if not grads.is_finite():
        raise FloatingPointError("non-finite gradient passed to adam_step")
    params = list(net.parameters())
    gs = list(grads.arrays())
    if len(gs) != len(params) or any(p.shape != g.shape for p, g in zip(params, gs)):
        raise UsageError("gradient shapes do not match the network")
    if not opt.m:
        opt.m = [np.zeros_like(p) for p in params]
        opt.v = [np.zeros_like(p) for p in params]
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.step
    c2 = 1.0 - b2**opt.step
    for p, g, m, v in zip(params, gs, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    net.version += 1


def save_checkpoint(path, net: Mlp, opt: OptimizerState | None = None, **extra) -> None:
    doc = {"net": net.to_dict(), "optimizer": opt.to_dict() if opt is not None else None, **extra}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    net = Mlp.from_dict(doc["net"])
    opt = OptimizerState.from_dict(doc["optimizer"], net) if doc.get("optimizer") else None
    return net, opt, doc
