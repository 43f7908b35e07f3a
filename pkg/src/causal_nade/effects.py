"""Interventional queries on a trained model: back-door adjustment (exact
discrete sum and Monte Carlo), front-door adjustment, conditional-effect
curves, and average treatment effects.

Adjustment-set identification is deliberately structural, not general: the
back-door routes require the single-confounder pattern (one root variable that
is a parent of both treatment and outcome, and the outcome's only other parent
is the treatment); the front-door route requires the three-variable chain
treatment -> mediator -> outcome with no other edges. Anything else is
rejected.

Monte Carlo routes use common random numbers keyed on the query seed, so the
two arms of an effect difference share their confounder draws and an effect of
a treatment against itself is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import graph as g
from . import heads as hd
from . import netcore as nc
from .model import AuxEstimator, CausalModel, ancestral_sample, node_raw
from .rngutil import rng as _rng

ADJUSTMENTS = ("backdoor-discrete", "backdoor-mc", "frontdoor-mc", "none")

_STREAM_BACKDOOR = 404
_STREAM_FRONTDOOR = 505
_STREAM_DIRECT = 606


class EffectError(ValueError):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"{kind}: {message}")


@dataclass(frozen=True)
class EffectQuery:
    treatment: str
    outcome: str
    treatment_values: tuple[float, float]  # (x1, x0)
    adjustment: str = "backdoor-discrete"
    mc_outer: int = 1000
    mc_inner: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.outcome == self.treatment:
            raise ValueError("outcome and treatment must differ")
        if self.adjustment not in ADJUSTMENTS:
            raise ValueError(f"unknown adjustment {self.adjustment!r}")
        object.__setattr__(
            self,
            "treatment_values",
            (float(self.treatment_values[0]), float(self.treatment_values[1])),
        )


@dataclass
class EffectEstimate:
    point: float
    samples: np.ndarray | None = None
    band: tuple[float, float] | None = None


def find_backdoor_confounder(dag: g.Dag, treatment: str, outcome: str) -> str:
    """The single root parent shared by treatment and outcome.

    Pattern required: parents(treatment) == (z,), parents(outcome) ==
    {z, treatment}, parents(z) == ().
    """
    tp = set(dag.parents_of(treatment))
    op = set(dag.parents_of(outcome))
    shared = [z for z in dag.names if z in tp and z in op and not dag.parents_of(z)]
    if len(shared) != 1:
        raise EffectError(
            "adjustment-set-not-found",
            f"no unique root confounder shared by {treatment!r} and {outcome!r}",
        )
    z = shared[0]
    if tp != {z} or op != {z, treatment}:
        raise EffectError(
            "adjustment-set-not-found",
            "graph does not match the confounder-of-both pattern",
        )
    return z


def frontdoor_roles(dag: g.Dag) -> tuple[str, str, str]:
    """(treatment, mediator, outcome) of a three-variable front-door chain."""
    names = dag.names
    if len(names) == 3:
        for t in names:
            if dag.parents_of(t):
                continue
            ms = [m for m in names if dag.parents_of(m) == (t,)]
            if len(ms) != 1:
                continue
            m = ms[0]
            (o,) = [o for o in names if o not in (t, m)]
            if dag.parents_of(o) == (m,):
                return t, m, o
    raise EffectError(
        "adjustment-graph-mismatch",
        "graph is not a treatment -> mediator -> outcome chain",
    )


def backdoor_discrete_ate(model: CausalModel, query: EffectQuery) -> EffectEstimate:
    """Exact adjustment over a binary confounder, probabilities and means read
    straight from the trained heads: sum_z [m(x1, z) - m(x0, z)] P(z)."""
    dag = model.dag
    z = find_backdoor_confounder(dag, query.treatment, query.outcome)
    if dag.kind_of(query.treatment) != "binary" or dag.kind_of(z) != "binary":
        raise EffectError(
            "non-discrete-variables",
            "treatment and confounder must both be binary",
        )
    p_z1 = hd.mean(model.heads[z], node_raw(model, z, {}, 1)[0])
    x1, x0 = query.treatment_values
    point = 0.0
    for zval, weight in ((1.0, p_z1), (0.0, 1.0 - p_z1)):
        m1 = _outcome_mean(model, query.outcome, {query.treatment: x1, z: zval})
        m0 = _outcome_mean(model, query.outcome, {query.treatment: x0, z: zval})
        point += weight * (m1 - m0)
    return EffectEstimate(point=point)


def _outcome_mean(model: CausalModel, outcome: str, assignment: dict[str, float]) -> float:
    raw = node_raw(model, outcome, {k: np.asarray(v) for k, v in assignment.items()}, 1)
    return hd.mean(model.heads[outcome], raw[0])


def backdoor_mc(model: CausalModel, query: EffectQuery, t: float) -> tuple[float, np.ndarray]:
    """Monte Carlo back-door adjustment at one treatment value.

    Draws the confounder from its fitted marginal, holds the treatment fixed,
    and returns (average of outcome-head means, one outcome draw per
    confounder draw). The confounder stream is keyed on the query seed, so
    calls for different treatment values share draws.
    """
    if query.mc_outer <= 0:
        raise EffectError("mc-samples-zero", "mc_outer must be positive")
    z = find_backdoor_confounder(model.dag, query.treatment, query.outcome)
    rng = _rng(query.seed, _STREAM_BACKDOOR)
    n = query.mc_outer
    z_raw = node_raw(model, z, {}, n)
    z_draws = hd.sample_column(model.heads[z], z_raw, rng)
    values = {z: z_draws, query.treatment: np.full(n, float(t))}
    out_raw = node_raw(model, query.outcome, values, n)
    means = hd.mean_column(model.heads[query.outcome], out_raw)
    draws = hd.sample_column(model.heads[query.outcome], out_raw, rng)
    return float(means.mean()), draws


def cate_curve(
    model: CausalModel,
    query: EffectQuery,
    grid: Sequence[float],
) -> np.ndarray:
    """Treatment effect on the outcome-head mean at each confounder value."""
    pts = np.asarray(grid, dtype=float)
    if pts.size == 0:
        raise EffectError("empty-grid", "confounder grid is empty")
    z = find_backdoor_confounder(model.dag, query.treatment, query.outcome)
    x1, x0 = query.treatment_values
    n = pts.size
    head = model.heads[query.outcome]
    raw1 = node_raw(model, query.outcome, {z: pts, query.treatment: np.full(n, x1)}, n)
    raw0 = node_raw(model, query.outcome, {z: pts, query.treatment: np.full(n, x0)}, n)
    return hd.mean_column(head, raw1) - hd.mean_column(head, raw0)


def support_grid(values: np.ndarray, points: int = 100, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Evenly spaced grid across a quantile window of observed values.

    The default window (1st to 99th percentile) is the reported support of the
    training data; estimates degrade outside it.
    """
    a, b = np.quantile(np.asarray(values, dtype=float), [lo, hi])
    return np.linspace(a, b, points)


def frontdoor_mc(
    model: CausalModel,
    aux: AuxEstimator | None,
    t_hat: float,
    n_outer: int,
    n_inner: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draws from the front-door estimate of P(outcome | do(treatment=t_hat)).

    Outer loop: mediator ~ fitted P(mediator | treatment=t_hat). Inner loop:
    treatment' ~ fitted marginal of the treatment, outcome ~ aux(mediator,
    treatment'). All n_outer * n_inner draws are pooled.
    """
    if aux is None:
        raise EffectError("missing-aux", "front-door adjustment needs an auxiliary estimator")
    if n_outer <= 0 or n_inner <= 0:
        raise EffectError("mc-samples-zero", "sample counts must be positive")
    treatment, mediator, outcome = frontdoor_roles(model.dag)
    total = n_outer * n_inner

    mg_raw = node_raw(model, mediator, {treatment: np.full(n_outer, float(t_hat))}, n_outer)
    mg = hd.sample_column(model.heads[mediator], mg_raw, rng)

    t_raw = node_raw(model, treatment, {}, total)
    t_prime = hd.sample_column(model.heads[treatment], t_raw, rng)

    aux_values = {mediator: np.repeat(mg, n_inner), treatment: t_prime}
    out_raw = aux.raw(aux_values, total)
    return hd.sample_column(aux.head, out_raw, rng)


def ate(model: CausalModel, query: EffectQuery, aux: AuxEstimator | None = None) -> EffectEstimate:
    """Difference of interventional outcome means between the two treatment
    values, via the adjustment named in the query."""
    x1, x0 = query.treatment_values
    if query.adjustment == "backdoor-discrete":
        return backdoor_discrete_ate(model, query)
    if query.adjustment == "backdoor-mc":
        m1, _ = backdoor_mc(model, query, x1)
        m0, _ = backdoor_mc(model, query, x0)
        return EffectEstimate(point=m1 - m0)
    if query.adjustment == "frontdoor-mc":
        frontdoor_roles(model.dag)  # raises adjustment-graph-mismatch early
        d1 = frontdoor_mc(model, aux, x1, query.mc_outer, query.mc_inner,
                          _rng(query.seed, _STREAM_FRONTDOOR))
        d0 = frontdoor_mc(model, aux, x0, query.mc_outer, query.mc_inner,
                          _rng(query.seed, _STREAM_FRONTDOOR))
        return EffectEstimate(point=float(d1.mean() - d0.mean()),
                              samples=np.concatenate([d1, d0]))
    # direct sampling of the mutilated model
    if query.mc_outer <= 0:
        raise EffectError("mc-samples-zero", "mc_outer must be positive")
    means = []
    for value in (x1, x0):
        rng = _rng(query.seed, _STREAM_DIRECT)
        ds = ancestral_sample(model, query.mc_outer, rng,
                              g.Intervention({query.treatment: value}))
        means.append(float(ds.column(query.outcome).mean()))
    return EffectEstimate(point=means[0] - means[1])
