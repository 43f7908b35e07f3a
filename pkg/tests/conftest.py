"""Shared fixtures: hand-built exact models for the binary kidney-stone
setting, and the classic 700-patient table as a dataset."""

import math

import numpy as np
import pytest

from causal_nade import dgp
from causal_nade import graph as g
from causal_nade import heads as hd
from causal_nade import netcore as nc
from causal_nade.data import Dataset
from causal_nade.model import CausalModel

# (ks, t, recovered, not_recovered) from the original 700-patient study
KIDNEY_COUNTS = [
    (0.0, 1.0, 81, 6),     # small, treatment A
    (0.0, 0.0, 234, 36),   # small, treatment B
    (1.0, 1.0, 192, 71),   # large, treatment A
    (1.0, 0.0, 55, 25),    # large, treatment B
]


def kidney_dag():
    return g.Dag(
        [("KS", "binary"), ("T", "binary"), ("R", "binary")],
        {"T": ["KS"], "R": ["KS", "T"]},
    )


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def exact_binary_model(p_large, p_treat_a, p_recover) -> CausalModel:
    """A model whose heads reproduce the given conditionals exactly.

    p_treat_a maps ks -> P(T=1 | ks); p_recover maps (ks, t) -> P(R=1 | ks, t).
    The recovery net uses three relu units (ks, t, and an AND gate) so all
    four cells are matched exactly.
    """
    dag = kidney_dag()
    ks_net = nc.Mlp((0, 1), "linear", [np.zeros((1, 0))], [np.array([_logit(p_large)])])

    l0, l1 = _logit(p_treat_a[0]), _logit(p_treat_a[1])
    t_net = nc.Mlp((1, 1), "linear", [np.array([[l1 - l0]])], [np.array([l0])])

    cell = {k: _logit(v) for k, v in p_recover.items()}
    a0 = cell[(0, 0)]
    a1 = cell[(1, 0)] - cell[(0, 0)]
    a2 = cell[(0, 1)] - cell[(0, 0)]
    a3 = cell[(1, 1)] - cell[(1, 0)] - cell[(0, 1)] + cell[(0, 0)]
    r_net = nc.Mlp(
        (2, 3, 1), "relu",
        [np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([[a1, a2, a3]])],
        [np.array([0.0, 0.0, -1.0]), np.array([a0])],
    )

    heads = {n: hd.Head("bernoulli") for n in ("KS", "T", "R")}
    nets = {"KS": ks_net, "T": t_net, "R": r_net}
    norms = {
        "KS": (np.zeros(0), np.ones(0)),
        "T": (np.zeros(1), np.ones(1)),
        "R": (np.zeros(2), np.ones(2)),
    }
    return CausalModel(dag, heads, nets, norms)


@pytest.fixture
def generating_model() -> CausalModel:
    """Heads equal to the data-generating conditionals."""
    return exact_binary_model(
        p_large=float(dgp.P_LARGE),
        p_treat_a={k: float(v) for k, v in dgp.P_TREAT_A.items()},
        p_recover={k: float(v) for k, v in dgp.P_RECOVER.items()},
    )


@pytest.fixture
def kidney_700() -> Dataset:
    rows = []
    for ks, t, rec, not_rec in KIDNEY_COUNTS:
        rows.extend([[ks, t, 1.0]] * rec)
        rows.extend([[ks, t, 0.0]] * not_rec)
    return Dataset(("KS", "T", "R"), np.array(rows))


def joint_probability(model: CausalModel, ks: float, t: float, r: float) -> float:
    """Brute-force chain-rule probability of one binary configuration."""
    from causal_nade.model import node_raw

    p_ks = hd.mean(model.heads["KS"], node_raw(model, "KS", {}, 1)[0])
    p_t = hd.mean(model.heads["T"], node_raw(model, "T", {"KS": np.asarray(ks)}, 1)[0])
    p_r = hd.mean(
        model.heads["R"],
        node_raw(model, "R", {"KS": np.asarray(ks), "T": np.asarray(t)}, 1)[0],
    )
    return (
        (p_ks if ks else 1 - p_ks)
        * (p_t if t else 1 - p_t)
        * (p_r if r else 1 - p_r)
    )
