"""The causal autoregressive density estimator.

One small feed-forward network per variable maps that variable's parents to
its distribution-head parameters. The joint density is the product of the
per-node conditionals, trained by minibatch gradient descent on the mean
negative log-likelihood. Because the loss decomposes over nodes, "joint"
training is realized as simultaneous independent per-node updates on shared
minibatches.

Continuous parent columns are standardized with training-set mean/std before
entering a network; binary parents are passed raw as 0/1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import graph as g
from . import heads as hd
from . import netcore as nc
from .data import Dataset, MissingColumnError
from .rngutil import rng as _rng

_STREAM_BUILD = 101
_STREAM_SHUFFLE = 202
_STREAM_AUX = 303

_STD_EPS = 1e-12


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


@dataclass
class TrainConfig:
    seed: int
    epochs: int = 300
    batch_size: int = 128
    optimizer: str = "rmsprop"
    learning_rate: float = 1e-3
    activation: str = "tanh"
    hidden: tuple[int, ...] = (8,)

    def __post_init__(self) -> None:
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")
        if self.activation not in nc.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class CausalModel:
    dag: g.Dag
    heads: dict[str, hd.Head]
    nets: dict[str, nc.Mlp]
    norms: dict[str, tuple[np.ndarray, np.ndarray]]  # per node: parent (mean, std)

    def net_for(self, name: str) -> nc.Mlp:
        return self.nets[name]

    def head_for(self, name: str) -> hd.Head:
        return self.heads[name]


def build(
    dag: g.Dag,
    hidden: Sequence[int] = (8,),
    activation: str = "tanh",
    seed: int = 0,
    head_overrides: Mapping[str, str] | None = None,
) -> CausalModel:
    """One network per variable: input width = number of parents, output
    width = head parameter count. Normalization starts as identity."""
    g.validate(dag)
    overrides = dict(head_overrides or {})
    heads: dict[str, hd.Head] = {}
    nets: dict[str, nc.Mlp] = {}
    norms: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for idx, var in enumerate(dag.variables):
        head = hd.head_for_kind(var.kind, overrides.pop(var.name, None))
        parents = dag.parents_of(var.name)
        sizes = [len(parents), *hidden, head.n_raw]
        nets[var.name] = nc.init(sizes, activation, _rng(seed, _STREAM_BUILD, idx))
        heads[var.name] = head
        norms[var.name] = (np.zeros(len(parents)), np.ones(len(parents)))
    if overrides:
        raise g.UnknownVariableError(
            f"head overrides for unknown variables: {sorted(overrides)}"
        )
    return CausalModel(dag, heads, nets, norms)


def _standardize(x: np.ndarray, norm: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    mean, std = norm
    if x.shape[1] == 0:
        return x
    return (x - mean) / std


def node_inputs(model: CausalModel, name: str, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Standardized input matrix for one node, parents read from ``values``.

    Scalar entries broadcast to length n.
    """
    parents = model.dag.parents_of(name)
    if not parents:
        return np.zeros((n, 0))
    cols = []
    for p in parents:
        v = np.asarray(values[p], dtype=float)
        cols.append(np.full(n, float(v)) if v.ndim == 0 else v)
    return _standardize(np.column_stack(cols), model.norms[name])


def node_raw(model: CausalModel, name: str, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Raw head outputs for one node at the given parent values."""
    return nc.forward(model.nets[name], node_inputs(model, name, values, n))


def _require_columns(data: Dataset, names: Sequence[str]) -> None:
    for name in names:
        if name not in data.columns:
            raise MissingColumnError(f"dataset lacks required column {name!r}")


def joint_nll(model: CausalModel, data: Dataset) -> float:
    """Mean over rows of the summed per-node negative log-likelihoods."""
    obs = data.observed()
    names = model.dag.names
    _require_columns(obs, names)
    if not names:
        return 0.0
    values = {name: obs.column(name) for name in names}
    total = 0.0
    for name in names:
        raw = node_raw(model, name, values, obs.n)
        nll, _ = hd.nll_terms(model.heads[name], raw, values[name])
        total += float(nll.mean())
    return total


def _fit_norm(dag: g.Dag, name: str, obs: Dataset) -> tuple[np.ndarray, np.ndarray]:
    parents = dag.parents_of(name)
    means = np.zeros(len(parents))
    stds = np.ones(len(parents))
    for j, p in enumerate(parents):
        if dag.kind_of(p) == "binary":
            continue  # binary parents enter raw as 0/1
        col = obs.column(p)
        means[j] = col.mean()
        sd = col.std()
        stds[j] = sd if sd > _STD_EPS else 1.0
    return means, stds


@dataclass
class _TrainEntry:
    name: str
    x: np.ndarray
    y: np.ndarray
    head: hd.Head
    net: nc.Mlp
    state: nc.OptimizerState


def _run_epochs(
    entries: list[_TrainEntry],
    n: int,
    cfg: TrainConfig,
    shuffle: np.random.Generator,
) -> list[float]:
    log: list[float] = []
    for epoch in range(cfg.epochs):
        perm = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            sl = perm[start:start + cfg.batch_size]
            scale = 1.0 / len(sl)
            for e in entries:
                xb = e.x[sl]
                raw = nc.forward(e.net, xb)
                nll, grad = hd.nll_terms(e.head, raw, e.y[sl])
                total += float(nll.sum())
                grads, _ = nc.backward(e.net, xb, grad * scale)
                try:
                    nc.apply_update(e.net, e.state, grads)
                except nc.NonFiniteGradientError as exc:
                    raise NonFiniteLossError(epoch) from exc
        epoch_nll = total / n
        if not np.isfinite(epoch_nll):
            raise NonFiniteLossError(epoch)
        log.append(epoch_nll)
    return log


def fit(
    model: CausalModel,
    data: Dataset,
    cfg: TrainConfig,
    nodes: Sequence[str] | None = None,
) -> tuple[CausalModel, list[float]]:
    """Train the per-node networks in place; returns the model and the
    per-epoch mean NLL log.

    ``nodes`` restricts training to a subset of variables (everything else,
    including its stored normalization, is left untouched). Fully determined
    by cfg.seed given the dataset.
    """
    obs = data.observed()
    names = model.dag.names
    _require_columns(obs, names)
    if obs.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    trained = list(names if nodes is None else nodes)
    for t in trained:
        if t not in names:
            raise g.UnknownVariableError(f"cannot train unknown node {t!r}")

    values = {name: obs.column(name) for name in names}
    entries = []
    for name in trained:
        model.norms[name] = _fit_norm(model.dag, name, obs)
        entries.append(
            _TrainEntry(
                name=name,
                x=node_inputs(model, name, values, obs.n),
                y=values[name],
                head=model.heads[name],
                net=model.nets[name],
                state=nc.optimizer_for(model.nets[name], cfg.optimizer, cfg.learning_rate),
            )
        )
    log = _run_epochs(entries, obs.n, cfg, _rng(cfg.seed, _STREAM_SHUFFLE))
    return model, log


def train_model(
    dag: g.Dag,
    data: Dataset,
    cfg: TrainConfig,
    head_overrides: Mapping[str, str] | None = None,
) -> tuple[CausalModel, list[float]]:
    """Convenience wrapper: build from cfg and fit."""
    model = build(dag, cfg.hidden, cfg.activation, cfg.seed, head_overrides)
    return fit(model, data, cfg)


def ancestral_sample(
    model: CausalModel,
    n: int,
    rng: np.random.Generator,
    iv: g.Intervention | None = None,
) -> Dataset:
    """Sample n rows, each variable drawn from its fitted conditional in
    topological order; intervened variables are clamped, never sampled."""
    dag = model.dag
    mdag = g.mutilate(dag, iv) if iv else dag
    order = g.topological_order(mdag)
    values: dict[str, np.ndarray] = {}
    for name in order:
        if iv is not None and name in iv:
            values[name] = np.full(n, iv[name])
            continue
        raw = node_raw(model, name, values, n)
        values[name] = hd.sample_column(model.heads[name], raw, rng)
    cols = {name: values[name] for name in dag.names}
    return Dataset(tuple(dag.names), np.column_stack([cols[c] for c in dag.names]) if dag.names else np.zeros((n, 0)))


@dataclass
class AuxEstimator:
    """A standalone conditional estimator P(target | inputs).

    Unlike model nodes, every input column is standardized by its training
    mean/std regardless of kind.
    """

    inputs: tuple[str, ...]
    target: str
    head: hd.Head
    net: nc.Mlp
    means: np.ndarray
    stds: np.ndarray

    def raw(self, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        cols = []
        for j, name in enumerate(self.inputs):
            v = np.asarray(values[name], dtype=float)
            col = np.full(n, float(v)) if v.ndim == 0 else v
            cols.append((col - self.means[j]) / self.stds[j])
        x = np.column_stack(cols) if cols else np.zeros((n, 0))
        return nc.forward(self.net, x)


def fit_auxiliary(
    data: Dataset,
    inputs: Sequence[str],
    target: str,
    head: hd.Head,
    cfg: TrainConfig,
) -> tuple[AuxEstimator, list[float]]:
    obs = data.observed()
    _require_columns(obs, [*inputs, target])
    if obs.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    k = len(inputs)
    means = np.zeros(k)
    stds = np.ones(k)
    cols = []
    for j, name in enumerate(inputs):
        col = obs.column(name)
        means[j] = col.mean()
        sd = col.std()
        stds[j] = sd if sd > _STD_EPS else 1.0
        cols.append((col - means[j]) / stds[j])
    x = np.column_stack(cols) if cols else np.zeros((obs.n, 0))
    net = nc.init([k, *cfg.hidden, head.n_raw], cfg.activation, _rng(cfg.seed, _STREAM_AUX))
    entry = _TrainEntry(
        name=target,
        x=x,
        y=obs.column(target),
        head=head,
        net=net,
        state=nc.optimizer_for(net, cfg.optimizer, cfg.learning_rate),
    )
    log = _run_epochs([entry], obs.n, cfg, _rng(cfg.seed, _STREAM_SHUFFLE))
    return AuxEstimator(tuple(inputs), target, head, net, means, stds), log


# -- persistence --------------------------------------------------------------

def _norms_to_json(norms) -> dict:
    return {
        name: {"mean": [float(v) for v in m], "std": [float(v) for v in s]}
        for name, (m, s) in norms.items()
    }


def save_model(model: CausalModel, path) -> None:
    bundle = {
        "kind": "causal-model",
        "format": 1,
        "dag": g.dag_to_dict(model.dag),
        "heads": {name: h.family for name, h in model.heads.items()},
        "norms": _norms_to_json(model.norms),
        "nets": {name: nc.to_text(net) for name, net in model.nets.items()},
    }
    Path(path).write_text(json.dumps(bundle, indent=2), encoding="utf-8")


def load_model(path) -> CausalModel:
    bundle = json.loads(Path(path).read_text(encoding="utf-8"))
    if bundle.get("kind") != "causal-model":
        raise ValueError(f"{path} is not a saved model bundle")
    dag = g.dag_from_dict(bundle["dag"])
    heads = {name: hd.Head(fam) for name, fam in bundle["heads"].items()}
    nets = {name: nc.from_text(text) for name, text in bundle["nets"].items()}
    norms = {
        name: (np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))
        for name, d in bundle["norms"].items()
    }
    return CausalModel(dag, heads, nets, norms)


def save_aux(aux: AuxEstimator, path) -> None:
    bundle = {
        "kind": "aux-estimator",
        "format": 1,
        "inputs": list(aux.inputs),
        "target": aux.target,
        "head": aux.head.family,
        "means": [float(v) for v in aux.means],
        "stds": [float(v) for v in aux.stds],
        "net": nc.to_text(aux.net),
    }
    Path(path).write_text(json.dumps(bundle, indent=2), encoding="utf-8")


def load_aux(path) -> AuxEstimator:
    bundle = json.loads(Path(path).read_text(encoding="utf-8"))
    if bundle.get("kind") != "aux-estimator":
        raise ValueError(f"{path} is not a saved auxiliary estimator")
    return AuxEstimator(
        tuple(bundle["inputs"]),
        bundle["target"],
        hd.Head(bundle["head"]),
        nc.from_text(bundle["net"]),
        np.array(bundle["means"], dtype=float),
        np.array(bundle["stds"], dtype=float),
    )
