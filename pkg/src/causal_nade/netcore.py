"""Small dense feed-forward networks with explicit backprop, plus the two
first-order optimizers used by the training loops.

Everything here is plain float64 numpy. Weight matrices are stored
(fan_out, fan_in); the hidden activation is applied to every layer except the
last, which is always linear (distribution heads own the output transforms).
A zero-input network is legal and reduces to trainable biases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")

RMSPROP_RHO = 0.99
RMSPROP_EPS = 1e-8


class DimensionMismatchError(ValueError):
    pass


class NonFiniteGradientError(ValueError):
    pass


@dataclass
class Mlp:
    sizes: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list in update order: W0, b0, W1, b1, ..."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init(sizes: Sequence[int], activation: str, rng: np.random.Generator) -> Mlp:
    """Fresh network: weights uniform on +-sqrt(6/(fan_in+fan_out)), zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if any(s < 0 for s in sizes) or any(s == 0 for s in sizes[1:]):
        raise ValueError(f"bad layer sizes {sizes}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, activation, weights, biases)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return np.where(z > 0.0, 1.0, 0.0)
    return np.ones_like(z)


def _as_batch(x, dim: int, what: str) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise DimensionMismatchError(
            f"{what} has shape {np.shape(x)}, expected width {dim}"
        )
    return a, single


def forward(net: Mlp, x) -> np.ndarray:
    """Evaluate the network on one input vector or a (batch, input_dim) matrix."""
    a, single = _as_batch(x, net.input_dim, "input")
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if i == last else _act(net.activation, z)
    return a[0] if single else a


def backward(net: Mlp, x, out_grad):
    """Exact reverse-mode gradients of <output, out_grad>.

    Returns (grads, input_grad) where grads is a list of (dW, db) per layer.
    Batch inputs accumulate (sum) over the batch.
    """
    a, single = _as_batch(x, net.input_dim, "input")
    g, gsingle = _as_batch(out_grad, net.output_dim, "output gradient")
    if single != gsingle or a.shape[0] != g.shape[0]:
        raise DimensionMismatchError("input and output gradient batch sizes differ")

    last = len(net.weights) - 1
    acts = [a]  # input of each layer
    pre: list[np.ndarray] = []  # pre-activation of hidden layers
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w.T + b
        if i == last:
            break
        pre.append(z)
        acts.append(_act(net.activation, z))

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.weights)  # type: ignore[list-item]
    delta = g
    for i in range(last, -1, -1):
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        delta = delta @ net.weights[i]
        if i > 0:
            delta = delta * _act_grad(net.activation, pre[i - 1])
    input_grad = delta[0] if single else delta
    return grads, input_grad


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    rho: float = RMSPROP_RHO
    eps: float = RMSPROP_EPS
    acc: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rmsprop decay must lie in (0, 1)")


def optimizer_for(
    net: Mlp,
    kind: str,
    learning_rate: float,
    rho: float = RMSPROP_RHO,
    eps: float = RMSPROP_EPS,
) -> OptimizerState:
    state = OptimizerState(kind, learning_rate, rho, eps)
    if kind == "rmsprop":
        state.acc = [np.zeros_like(p) for p in net.parameters()]
    return state


def apply_update(net: Mlp, state: OptimizerState, grads) -> tuple[Mlp, OptimizerState]:
    """One elementwise optimizer step, in place.

    ``grads`` is the (dW, db)-per-layer structure produced by backward(). Any
    non-finite gradient entry refuses the whole update and leaves the network
    untouched.
    """
    flat: list[np.ndarray] = []
    for dw, db in grads:
        flat.append(np.asarray(dw, dtype=float))
        flat.append(np.asarray(db, dtype=float))
    params = net.parameters()
    if len(flat) != len(params):
        raise DimensionMismatchError("gradient structure does not match network")
    for g, p in zip(flat, params):
        if g.shape != p.shape:
            raise DimensionMismatchError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient; update refused")
    lr = state.learning_rate
    if state.kind == "sgd":
        for g, p in zip(flat, params):
            p -= lr * g
    else:
        for g, p, a in zip(flat, params, state.acc):
            a *= state.rho
            a += (1.0 - state.rho) * g * g
            p -= lr * g / (np.sqrt(a) + state.eps)
    return net, state


def collapse_affine(net: Mlp) -> tuple[np.ndarray, np.ndarray]:
    """Fold a linear-activation network into a single affine map (A, c)."""
    if net.activation != "linear":
        raise ValueError("only linear-activation networks collapse to affine maps")
    a = net.weights[0].copy()
    c = net.biases[0].copy()
    for w, b in zip(net.weights[1:], net.biases[1:]):
        a = w @ a
        c = w @ c + b
    return a, c


def to_text(net: Mlp) -> str:
    """Flat text serialization; round-trips finite doubles bit-exactly."""
    lines = ["mlp-v1", "activation " + net.activation,
             "sizes " + " ".join(str(s) for s in net.sizes)]
    for w, b in zip(net.weights, net.biases):
        lines.append(f"W {w.shape[0]} {w.shape[1]}")
        if w.shape[1] > 0:  # zero-input layers have no row payload
            for row in w:
                lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(f"b {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Mlp:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "mlp-v1":
        raise ValueError("not a serialized network")
    activation = lines[1].split(" ", 1)[1]
    sizes = tuple(int(s) for s in lines[2].split()[1:])
    weights, biases = [], []
    i = 3
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        head = lines[i].split()
        if head[0] != "W" or (int(head[1]), int(head[2])) != (fan_out, fan_in):
            raise ValueError(f"bad weight header at line {i}")
        i += 1
        if fan_in == 0:
            w = np.zeros((fan_out, 0))
        else:
            rows = []
            for _ in range(fan_out):
                rows.append([float(v) for v in lines[i].split()])
                i += 1
            w = np.array(rows, dtype=float).reshape(fan_out, fan_in)
        head = lines[i].split()
        if head[0] != "b" or int(head[1]) != fan_out:
            raise ValueError(f"bad bias header at line {i}")
        i += 1
        b = np.array([float(v) for v in lines[i].split()], dtype=float)
        i += 1
        weights.append(w)
        biases.append(b)
    return Mlp(sizes, activation, weights, biases)
