"""Seeded synthetic data generators for the nine experiment settings, their
analytic ground-truth effects, and an exact interventional simulator.

All generators share the classic kidney-stone study layout: a confounder KS
(stone size), a treatment T and a recovery outcome R, extended with a mediator
Mg for the front-door setting and a latent confounder U for the
unobserved-confounding settings. Binary encoding: KS=1 means a large stone,
T=1 means treatment A, R=1 means recovery.

Hidden variables (the front-door KS, the latent U) are present in generated
datasets but flagged hidden, so the training pipeline never reads them.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import expit

from .data import Dataset
from .graph import Dag, Intervention, UnknownVariableError

EXPERIMENTS = (
    "binary",
    "continuous-outcome",
    "continuous-confounder-gamma",
    "continuous-confounder-lognormal",
    "nonlinear",
    "frontdoor",
    "unobs-mild",
    "unobs-strong",
    "unobs-nonlinear",
)

# observed kidney-stone frequencies (counts out of 700 patients)
P_LARGE = Fraction(49, 100)
P_TREAT_A = {0: Fraction(87, 357), 1: Fraction(263, 343)}  # by stone size
P_RECOVER = {  # keyed (ks, t)
    (0, 1): Fraction(81, 87),
    (0, 0): Fraction(234, 270),
    (1, 1): Fraction(192, 263),
    (1, 0): Fraction(55, 80),
}

GAMMA_SHAPE, GAMMA_SCALE = 5.0, 2.0
LOGNORMAL_MU, LOGNORMAL_SIGMA = 2.5, 0.25
LOGNORMAL_MEAN = float(np.exp(LOGNORMAL_MU + LOGNORMAL_SIGMA**2 / 2))
SIZE_CUTOFF = 10.0  # nominal confounder mean used as the treatment threshold

MILD_CONFOUNDING = 0.3
STRONG_CONFOUNDING = 3.0


@dataclass(frozen=True)
class DgpSpec:
    experiment: str
    n: int
    seed: int
    center_treatment: bool = True
    center_outcome: bool = False
    confounding: float | None = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.confounding is None:
            default = {
                "unobs-mild": MILD_CONFOUNDING,
                "unobs-strong": STRONG_CONFOUNDING,
                "unobs-nonlinear": 1.0,
            }.get(self.experiment)
            object.__setattr__(self, "confounding", default)


def observed_dag(experiment: str) -> Dag:
    """The modeling graph over observed variables for one experiment."""
    if experiment == "binary":
        kinds = {"KS": "binary", "T": "binary", "R": "binary"}
    elif experiment == "continuous-outcome":
        kinds = {"KS": "binary", "T": "binary", "R": "continuous-real"}
    elif experiment == "frontdoor":
        return Dag(
            [("T", "continuous-real"), ("Mg", "continuous-real"), ("R", "continuous-real")],
            {"Mg": ["T"], "R": ["Mg"]},
        )
    else:
        kinds = {"KS": "continuous-positive", "T": "binary", "R": "continuous-real"}
    return Dag(
        [("KS", kinds["KS"]), ("T", kinds["T"]), ("R", kinds["R"])],
        {"T": ["KS"], "R": ["KS", "T"]},
    )


def _variables(experiment: str) -> tuple[str, ...]:
    if experiment == "frontdoor":
        return ("KS", "T", "Mg", "R")
    if experiment.startswith("unobs"):
        return ("KS", "U", "T", "R")
    return ("KS", "T", "R")


class _Draws:
    """Per-variable draw-or-clamp helper shared by all generators."""

    def __init__(self, iv: Intervention, n: int):
        self.iv = iv
        self.n = n

    def value(self, name: str, draw) -> np.ndarray:
        if name in self.iv:
            return np.full(self.n, self.iv[name])
        return draw()


def generate(spec: DgpSpec) -> Dataset:
    """Rows drawn per the experiment's generative algorithm; deterministic in
    the seed. Hidden variables come back flagged."""
    return intervene_dgp(spec, Intervention({}), spec.n, spec.seed)


def intervene_dgp(spec: DgpSpec, iv: Intervention, n: int, seed: int) -> Dataset:
    """Ground-truth interventional sampler: the intervened variable's own
    equation is skipped (clamped to the assigned value), everything downstream
    runs unchanged."""
    known = _variables(spec.experiment)
    for name in iv.names:
        if name not in known:
            raise UnknownVariableError(
                f"{spec.experiment} has no variable named {name!r}"
            )
    rng = np.random.default_rng(np.random.SeedSequence(seed & (2**64 - 1)))
    d = _Draws(iv, n)
    exp = spec.experiment

    if exp in ("binary", "continuous-outcome"):
        ks = d.value("KS", lambda: (rng.random(n) < float(P_LARGE)).astype(float))
        p_t = np.where(ks == 1.0, float(P_TREAT_A[1]), float(P_TREAT_A[0]))
        t = d.value("T", lambda: (rng.random(n) < p_t).astype(float))
        if exp == "binary":
            p_r = _recovery_prob(ks, t)
            r = d.value("R", lambda: (rng.random(n) < p_r).astype(float))
        else:
            r = d.value("R", lambda: 4.0 * t + np.exp(ks) + 2.0 * rng.standard_normal(n))
        return _dataset(("KS", "T", "R"), (ks, t, r))

    if exp.startswith("continuous-confounder"):
        if exp.endswith("gamma"):
            ks = d.value("KS", lambda: rng.gamma(GAMMA_SHAPE, GAMMA_SCALE, n))
        else:
            ks = d.value("KS", lambda: rng.lognormal(LOGNORMAL_MU, LOGNORMAL_SIGMA, n))
        p_t = np.where(ks > SIZE_CUTOFF, float(P_TREAT_A[1]), float(P_TREAT_A[0]))
        t = d.value("T", lambda: (rng.random(n) < p_t).astype(float))
        r = d.value("R", lambda: 4.0 * t + ks + 2.0 * rng.standard_normal(n))
        return _dataset(("KS", "T", "R"), (ks, t, r))

    if exp == "nonlinear" or exp.startswith("unobs"):
        ks = d.value("KS", lambda: rng.lognormal(LOGNORMAL_MU, LOGNORMAL_SIGMA, n))
        ks_treat = ks - LOGNORMAL_MEAN if spec.center_treatment else ks
        ks_out = ks - LOGNORMAL_MEAN if spec.center_outcome else ks
        if exp == "nonlinear":
            p_t = expit(ks_treat / 10.0)
            t = d.value("T", lambda: (rng.random(n) < p_t).astype(float))
            r = d.value(
                "R", lambda: 50.0 * t / (ks_out + 3.0) + rng.standard_normal(n)
            )
            return _dataset(("KS", "T", "R"), (ks, t, r))
        u = d.value("U", lambda: rng.standard_normal(n))
        p_t = expit((ks_treat + u) / 10.0)
        t = d.value("T", lambda: (rng.random(n) < p_t).astype(float))
        bump = t * u * u if exp == "unobs-nonlinear" else spec.confounding * t * u
        r = d.value(
            "R", lambda: 50.0 * t / (ks_out + 3.0) + bump + rng.standard_normal(n)
        )
        return _dataset(("KS", "T", "R", "U"), (ks, t, r, u), hidden=("U",))

    # front-door chain with an unobserved confounder
    ks = d.value("KS", lambda: rng.standard_normal(n))
    t = d.value("T", lambda: np.sin(ks) + 0.1 * rng.standard_normal(n))
    mg = d.value("Mg", lambda: 1.0 + t * t + 0.1 * rng.standard_normal(n))
    r = d.value(
        "R", lambda: np.sin(ks * ks) + 5.0 / mg + 0.1 * rng.standard_normal(n)
    )
    return _dataset(("T", "Mg", "R", "KS"), (t, mg, r, ks), hidden=("KS",))


def _recovery_prob(ks: np.ndarray, t: np.ndarray) -> np.ndarray:
    p11, p10 = float(P_RECOVER[(1, 1)]), float(P_RECOVER[(1, 0)])
    p01, p00 = float(P_RECOVER[(0, 1)]), float(P_RECOVER[(0, 0)])
    return ks * (t * p11 + (1 - t) * p10) + (1 - ks) * (t * p01 + (1 - t) * p00)


def _dataset(names, cols, hidden=()) -> Dataset:
    return Dataset(tuple(names), np.column_stack(cols), frozenset(hidden))


def binary_true_ate() -> float:
    """Exact-fraction back-door ATE implied by the kidney-stone table."""
    value = (1 - P_LARGE) * (P_RECOVER[(0, 1)] - P_RECOVER[(0, 0)]) + P_LARGE * (
        P_RECOVER[(1, 1)] - P_RECOVER[(1, 0)]
    )
    return float(value)


def true_effect(spec: DgpSpec, ks=None):
    """Ground-truth treatment effect for one experiment.

    Scalar for the linear settings; the reference curve value 50/(ks+3) for
    the conditional-effect settings (ks required, arrays accepted); the string
    "simulation-only" for the front-door setting, whose truth is only
    available by simulating with intervene_dgp.
    """
    exp = spec.experiment
    if exp == "binary":
        return binary_true_ate()
    if exp in ("continuous-outcome", "continuous-confounder-gamma",
               "continuous-confounder-lognormal"):
        return 4.0
    if exp == "frontdoor":
        return "simulation-only"
    if ks is None:
        raise ValueError(f"experiment {exp!r} needs a confounder value (ks)")
    ks = np.asarray(ks, dtype=float)
    out = 50.0 / (ks + 3.0)
    return float(out) if out.ndim == 0 else out
