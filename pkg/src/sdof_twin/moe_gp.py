"""Mixture of GP experts with Gaussian gating over (standardized) time.

Flat hyperparameter layout for ``M`` experts, length ``8 * M``::

    [mu_1..mu_M, log_lambda_1..log_lambda_M,
     h0, h1, h2, log_l, log_sf, log_sn   (expert 1),
     ...                                  (expert M)]

Mixing coefficients ``pi`` are not part of the vector; they are point
estimates maintained by EM.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import EmptyEnsemble, NonFiniteLikelihood, NotASimplex
from .gp_expert import EXPERT_DIM, LOG_2PI, GPExpertParams, TimeStandardizer, mean_basis
from .smc import ParticleEnsemble, standard_normal_log_prior

SCHEMA = "sdof_twin.moe_gp/1"
DEFAULT_PROBS = (0.025, 0.5, 0.975)


def hyper_dim(n_experts: int) -> int:
    return n_experts * (2 + EXPERT_DIM)


@dataclass(frozen=True)
class GatingParams:
    mu: tuple
    log_lambda: tuple

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        ll = tuple(float(x) for x in self.log_lambda)
        if len(mu) != len(ll):
            raise ValueError("gate centers and precisions differ in length")
        if not all(math.isfinite(x) for x in mu + ll):
            raise ValueError("gating parameters must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_lambda", ll)


@dataclass(frozen=True)
class MixingCoefficients:
    pi: tuple

    def __post_init__(self):
        pi = tuple(float(x) for x in self.pi)
        if not pi or any(p < 0 for p in pi) or abs(sum(pi) - 1.0) > 1e-12:
            raise NotASimplex(f"mixing coefficients must form a simplex, got {pi}")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def uniform(cls, m: int) -> "MixingCoefficients":
        return cls(tuple(np.full(m, 1.0 / m)))

    @classmethod
    def normalized(cls, values) -> "MixingCoefficients":
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        v = v / v.sum()
        # push rounding residue onto the largest entry
        k = int(np.argmax(v))
        v[k] = 1.0 - (v.sum() - v[k])
        return cls(tuple(v))

    def __len__(self):
        return len(self.pi)

    def as_array(self) -> np.ndarray:
        return np.array(self.pi)


@dataclass(frozen=True)
class HyperparameterVector:
    gating: GatingParams
    experts: tuple

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def pack(self) -> np.ndarray:
        parts = [np.array(self.gating.mu), np.array(self.gating.log_lambda)]
        parts += [e.to_vector() for e in self.experts]
        return np.concatenate(parts)

    @classmethod
    def unpack(cls, vector, n_experts: int) -> "HyperparameterVector":
        v = np.asarray(vector, dtype=float)
        if v.shape != (hyper_dim(n_experts),):
            raise ValueError(f"expected vector of length {hyper_dim(n_experts)}, got {v.shape}")
        m = n_experts
        gating = GatingParams(mu=tuple(v[:m]), log_lambda=tuple(v[m:2 * m]))
        body = v[2 * m:].reshape(m, EXPERT_DIM)
        return cls(gating=gating, experts=tuple(GPExpertParams.from_vector(row) for row in body))


def split_batch(theta, n_experts: int):
    """Vectorized unpack of an ``(N, 8M)`` array into named blocks."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    m = n_experts
    body = theta[:, 2 * m:].reshape(theta.shape[0], m, EXPERT_DIM)
    return {
        "mu": theta[:, :m],
        "log_lambda": theta[:, m:2 * m],
        "h": body[:, :, :3],
        "log_l": body[:, :, 3],
        "log_sf": body[:, :, 4],
        "log_sn": body[:, :, 5],
    }


def _log_pi(pi):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(pi, dtype=float))


def _log_gate_terms(t_bar, mu, log_lam, log_pi):
    """``log pi_i + log N(t | mu_i, 1/lambda_i)``, shape ``(N, S, M)``."""
    lam = np.exp(log_lam)[:, None, :]
    diff = t_bar[None, :, None] - mu[:, None, :]
    return log_pi[None, None, :] + 0.5 * (log_lam[:, None, :] - LOG_2PI) - 0.5 * lam * diff * diff


def _lse_experts(x):
    """logsumexp over the trailing (expert) axis.

    The expert axis is short, so looping over it beats a generic reduction
    on strided data by a wide margin.
    """
    m = x[..., 0].copy()
    for i in range(1, x.shape[-1]):
        np.maximum(m, x[..., i], out=m)
    m[~np.isfinite(m)] = 0.0
    s = np.zeros_like(m)
    for i in range(x.shape[-1]):
        s += np.exp(x[..., i] - m)
    with np.errstate(divide="ignore"):
        return np.log(s) + m


def _log_gates_batch(t_bar, blocks, log_pi):
    terms = _log_gate_terms(t_bar, blocks["mu"], blocks["log_lambda"], log_pi)
    return terms - _lse_experts(terms)[..., None]


def _expert_moments_batch(t_bar, blocks):
    """Expert means ``(N, S, M)`` and variances ``(N, 1, M)``."""
    phi = mean_basis(t_bar)  # (S, 3)
    h = blocks["h"]
    # explicit broadcast over the three basis columns; einsum is much slower here
    means = h[:, None, :, 0] * phi[None, :, 0, None]
    for b in range(1, phi.shape[1]):
        means += h[:, None, :, b] * phi[None, :, b, None]
    var = np.exp(2.0 * blocks["log_sf"]) + np.exp(2.0 * blocks["log_sn"])
    return means, var[:, None, :]


def gate_weights(t, gating: GatingParams, mixing: MixingCoefficients) -> np.ndarray:
    """Responsibility of each expert at (standardized) time ``t``; sums to 1."""
    mu = np.array(gating.mu)[None, :]
    log_lam = np.array(gating.log_lambda)[None, :]
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    log_z = _log_gates_batch(t_arr, {"mu": mu, "log_lambda": log_lam}, _log_pi(mixing.pi))[0]
    z = np.exp(log_z)
    assert np.all(np.isfinite(z)), "gate normalization failed"
    return z[0] if np.ndim(t) == 0 else z


def batch_log_likelihood(theta, t_bar, y, log_pi, n_experts: int) -> np.ndarray:
    """Per-particle mixture log-likelihood, shape ``(N,)``; no finiteness checks."""
    blocks = split_batch(theta, n_experts)
    terms = _log_gate_terms(t_bar, blocks["mu"], blocks["log_lambda"], log_pi)
    means, var = _expert_moments_batch(t_bar, blocks)
    resid = y[None, :, None] - means
    log_f = -0.5 * (LOG_2PI + np.log(var) + resid * resid / var)
    return (_lse_experts(terms + log_f) - _lse_experts(terms)).sum(axis=1)


def _as_data(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("data must be a non-empty sequence of (t, y) pairs")
    return arr[:, 0], arr[:, 1]


def mixture_log_likelihood(data, theta, mixing: MixingCoefficients, n_experts: Optional[int] = None) -> float:
    """Log-likelihood of ``(t_bar, y)`` pairs under one hyperparameter vector."""
    if isinstance(theta, HyperparameterVector):
        n_experts, vec = theta.n_experts, theta.pack()
    else:
        vec = np.asarray(theta, dtype=float)
        n_experts = n_experts or len(mixing)
    t, y = _as_data(data)
    blocks = split_batch(vec, n_experts)
    log_z = _log_gates_batch(t, blocks, _log_pi(mixing.pi))
    means, var = _expert_moments_batch(t, blocks)
    resid = y[None, :, None] - means
    log_f = -0.5 * (LOG_2PI + np.log(var) + resid * resid / var)
    per_point = logsumexp(log_z + log_f, axis=2)[0]
    bad = ~np.isfinite(per_point)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteLikelihood(f"non-finite likelihood term at data index {i}", index=i)
    return float(per_point.sum())


def log_posterior_density(theta, mixing: MixingCoefficients, data, anneal_gamma: float = 1.0,
                          n_experts: Optional[int] = None) -> float:
    if not 0.0 <= anneal_gamma <= 1.0:
        raise ValueError(f"anneal_gamma must lie in [0, 1], got {anneal_gamma}")
    vec = theta.pack() if isinstance(theta, HyperparameterVector) else np.asarray(theta, dtype=float)
    prior = float(standard_normal_log_prior(vec)[0])
    if anneal_gamma == 0.0:
        return prior
    return prior + anneal_gamma * mixture_log_likelihood(data, theta, mixing, n_experts)


class MixtureTarget:
    """Tempered posterior over hyperparameters for fixed mixing coefficients."""

    def __init__(self, t_bar, y, mixing: MixingCoefficients, n_experts: int):
        self.t_bar = np.asarray(t_bar, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n_experts = n_experts
        self.dim = hyper_dim(n_experts)
        self.log_pi = _log_pi(mixing.pi)

    def log_likelihood(self, theta):
        with np.errstate(over="ignore", under="ignore"):
            ll = batch_log_likelihood(theta, self.t_bar, self.y, self.log_pi, self.n_experts)
        # overflowing scales make a particle impossible rather than invalid
        return np.where(np.isnan(ll), -np.inf, ll)

    def log_prior(self, theta):
        return standard_normal_log_prior(theta)

    def sample_prior(self, rng, n):
        return rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class PredictiveDistribution:
    t_star: float
    mean: float
    variance: float
    quantiles: dict
    components: Optional[tuple] = None


@dataclass(frozen=True)
class MoEGPModel:
    n_experts: int
    mixing: MixingCoefficients
    ensemble: ParticleEnsemble
    standardizer: TimeStandardizer
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_experts < 1:
            raise ValueError("a mixture needs at least one expert")
        if len(self.mixing) != self.n_experts:
            raise ValueError("mixing length does not match expert count")

    def to_dict(self) -> dict:
        ens = self.ensemble
        return {
            "schema": SCHEMA,
            "n_experts": self.n_experts,
            "mixing": list(self.mixing.pi),
            "standardizer": self.standardizer.to_dict(),
            "particles": ens.particles.tolist(),
            "weights": ens.weights.tolist(),
            "rng_state_digest": ens.rng_state_digest,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MoEGPModel":
        if payload.get("schema") != SCHEMA:
            raise ValueError(f"unsupported model schema {payload.get('schema')!r}")
        particles = np.array(payload["particles"], dtype=float)
        weights = np.array(payload["weights"], dtype=float)
        with np.errstate(divide="ignore"):
            log_w = np.log(weights)
        ens = ParticleEnsemble(
            particles=particles, log_unnorm_weights=log_w, weights=weights, gamma=1.0,
            rng_state_digest=payload.get("rng_state_digest", ""),
        )
        return cls(
            n_experts=int(payload["n_experts"]),
            mixing=MixingCoefficients(tuple(payload["mixing"])),
            ensemble=ens,
            standardizer=TimeStandardizer(**payload["standardizer"]),
            provenance=payload.get("provenance", {}),
        )


def predictive_components(t_star, model: MoEGPModel):
    """Mixture components over (particle, expert) at each time in ``t_star``.

    Returns weights, means and variances, each shaped ``(G, N * M)``.
    """
    ens = model.ensemble
    if ens is None or ens.n == 0:
        raise EmptyEnsemble("model has no posterior particles")
    t_bar = np.atleast_1d(model.standardizer(t_star))
    blocks = split_batch(ens.particles, model.n_experts)
    log_z = _log_gates_batch(t_bar, blocks, _log_pi(model.mixing.pi))  # (N, G, M)
    means, var = _expert_moments_batch(t_bar, blocks)
    w = ens.weights[:, None, None] * np.exp(log_z)
    var = np.broadcast_to(var, means.shape)
    g = t_bar.size
    reorder = lambda a: np.moveaxis(a, 1, 0).reshape(g, -1)
    return reorder(w), reorder(means), reorder(var)


def mixture_quantiles(w, mu, var, probs: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    """Quantiles of Gaussian mixtures by bisection on the CDF; rows are mixtures."""
    sd = np.sqrt(var)
    live = w > 0
    lo = np.where(live, mu - 12.0 * sd, np.inf).min(axis=1)
    hi = np.where(live, mu + 12.0 * sd, -np.inf).max(axis=1)
    out = np.empty((w.shape[0], len(probs)))
    n_iter = int(np.ceil(np.log2(max(np.max(hi - lo), tol) / tol))) + 1
    total = w.sum(axis=1)
    for j, p in enumerate(probs):
        a, b = lo.copy(), hi.copy()
        for _ in range(n_iter):
            mid = 0.5 * (a + b)
            cdf = (w * ndtr((mid[:, None] - mu) / sd)).sum(axis=1) / total
            below = cdf < p
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        out[:, j] = 0.5 * (a + b)
    return out


def predictive_grid(model: MoEGPModel, t_star, probs: Sequence[float] = DEFAULT_PROBS):
    """Vectorized predictive mean, variance and quantiles over a time grid."""
    w, mu, var = predictive_components(t_star, model)
    w = w / w.sum(axis=1, keepdims=True)
    mean = (w * mu).sum(axis=1)
    second = (w * (var + mu * mu)).sum(axis=1)
    variance = np.maximum(second - mean * mean, 0.0)
    q = mixture_quantiles(w, mu, var, probs) if probs else np.empty((len(mean), 0))
    return mean, variance, q


def posterior_predictive(t_star: float, model: MoEGPModel, probs: Sequence[float] = DEFAULT_PROBS,
                         keep_components: bool = False) -> PredictiveDistribution:
    w, mu, var = predictive_components(np.array([t_star], dtype=float), model)
    w = w / w.sum(axis=1, keepdims=True)
    mean = float((w * mu).sum())
    variance = max(float((w * (var + mu * mu)).sum()) - mean * mean, 0.0)
    q = mixture_quantiles(w, mu, var, probs)[0] if probs else []
    comps = None
    if keep_components:
        comps = tuple(zip(w[0].tolist(), mu[0].tolist(), var[0].tolist()))
    return PredictiveDistribution(
        t_star=float(t_star), mean=mean, variance=variance,
        quantiles={float(p): float(v) for p, v in zip(probs, q)}, components=comps,
    )
