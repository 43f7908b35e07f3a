"""Distribution heads: translate raw network outputs into density parameters,
negative log-likelihoods (with gradients for backprop), samples, and means.

Three families are supported. Bernoulli takes one raw output (a logit);
gaussian and lognormal take two (location and an unconstrained scale).
Scale positivity comes from softplus plus a fixed floor, and the Bernoulli
probability is clamped away from 0/1 before any log, so losses stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

FAMILIES = ("bernoulli", "gaussian", "lognormal")

P_CLAMP = 1e-6
SIGMA_FLOOR = 1e-3

_LOG_2PI = float(np.log(2.0 * np.pi))


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Head:
    family: str

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown head family {self.family!r}")

    @property
    def n_raw(self) -> int:
        return 1 if self.family == "bernoulli" else 2


def head_for_kind(kind: str, override: str | None = None) -> Head:
    """Default family per variable kind, with optional per-variable override."""
    if override is not None:
        return Head(override)
    table = {
        "binary": "bernoulli",
        "continuous-real": "gaussian",
        "continuous-positive": "lognormal",
    }
    try:
        return Head(table[kind])
    except KeyError:
        raise ValueError(f"no head family for variable kind {kind!r}") from None


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _as_raw2d(head: Head, raw) -> np.ndarray:
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != head.n_raw:
        raise ValueError(
            f"{head.family} head expects {head.n_raw} raw outputs, got shape {np.shape(raw)}"
        )
    return a


def _check_binary(x: np.ndarray) -> None:
    if not np.isin(x, (0.0, 1.0)).all():
        raise DomainError("bernoulli observations must be 0 or 1")


def _check_positive(x: np.ndarray) -> None:
    if not (x > 0.0).all():
        raise DomainError("lognormal observations must be positive")


def _scale(raw2d: np.ndarray) -> np.ndarray:
    return _softplus(raw2d[:, 1]) + SIGMA_FLOOR


def nll_terms(head: Head, raw, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-row negative log-density and its gradient w.r.t. the raw outputs.

    ``raw`` is (n, n_raw) (a single vector is promoted), ``x`` is length n.
    """
    r = _as_raw2d(head, raw)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if xv.shape != (r.shape[0],):
        raise ValueError("observation vector does not match raw output rows")

    if head.family == "bernoulli":
        _check_binary(xv)
        z = r[:, 0]
        p_raw = expit(z)
        p = np.clip(p_raw, P_CLAMP, 1.0 - P_CLAMP)
        nll = -(xv * np.log(p) + (1.0 - xv) * np.log1p(-p))
        live = (p_raw > P_CLAMP) & (p_raw < 1.0 - P_CLAMP)
        grad = np.where(live, p - xv, 0.0)[:, None]
        return nll, grad

    if head.family == "lognormal":
        _check_positive(xv)
        target = np.log(xv)
        extra = target  # the log|dx/dy| term; constant w.r.t. raw outputs
    else:
        target = xv
        extra = 0.0

    mu = r[:, 0]
    sigma = _scale(r)
    zscore = (target - mu) / sigma
    nll = 0.5 * _LOG_2PI + np.log(sigma) + 0.5 * zscore * zscore + extra
    dmu = -zscore / sigma
    dsigma = (1.0 - zscore * zscore) / sigma
    draw1 = dsigma * expit(r[:, 1])  # chain rule through softplus
    return nll, np.column_stack([dmu, draw1])


def nll(head: Head, raw, x: float) -> float:
    """Negative log-density of a single observation."""
    v, _ = nll_terms(head, np.asarray(raw, dtype=float)[None, :], [x])
    return float(v[0])


def nll_gradient(head: Head, raw, x: float) -> np.ndarray:
    _, g = nll_terms(head, np.asarray(raw, dtype=float)[None, :], [x])
    return g[0]


def params(head: Head, raw) -> tuple[float, ...]:
    """Density parameters implied by raw outputs: (p,) or (mu, sigma)."""
    r = _as_raw2d(head, np.asarray(raw, dtype=float))
    if head.family == "bernoulli":
        return (float(np.clip(expit(r[0, 0]), P_CLAMP, 1.0 - P_CLAMP)),)
    return float(r[0, 0]), float(_scale(r)[0])


def sample_column(head: Head, raw, rng: np.random.Generator) -> np.ndarray:
    """One draw per raw-output row."""
    r = _as_raw2d(head, raw)
    n = r.shape[0]
    if head.family == "bernoulli":
        p = np.clip(expit(r[:, 0]), P_CLAMP, 1.0 - P_CLAMP)
        return (rng.random(n) < p).astype(float)
    mu = r[:, 0]
    sigma = _scale(r)
    draws = mu + sigma * rng.standard_normal(n)
    if head.family == "lognormal":
        return np.exp(draws)
    return draws


def sample(head: Head, raw, rng: np.random.Generator) -> float:
    return float(sample_column(head, np.asarray(raw, dtype=float)[None, :], rng)[0])


def mean_column(head: Head, raw) -> np.ndarray:
    r = _as_raw2d(head, raw)
    if head.family == "bernoulli":
        return np.clip(expit(r[:, 0]), P_CLAMP, 1.0 - P_CLAMP)
    mu = r[:, 0]
    if head.family == "gaussian":
        return mu.copy()
    sigma = _scale(r)
    return np.exp(mu + 0.5 * sigma * sigma)


def mean(head: Head, raw) -> float:
    return float(mean_column(head, np.asarray(raw, dtype=float)[None, :])[0])
