"""Annealed sequential Monte Carlo sampler.

Particles start as prior draws with unit weights and are carried through the
tempered targets ``p_t(theta) ~ prior(theta) * L(theta)**gamma_t`` with one or
more random-walk Metropolis-Hastings moves per step, incremental importance
reweighting and ESS-triggered systematic resampling.

Randomness is drawn per step from a stream keyed by ``(seed, *stream, step)``;
row ``i`` of every draw belongs to particle ``i``, so splitting particle work
across workers cannot change the result.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigInvalid, NotASimplex, TargetNonFinite

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SmcConfig:
    n_particles: int = 1000
    n_steps: int = 50
    ess_threshold: float = 0.85
    proposal_scale: float = 1.0
    anneal_schedule: Optional[tuple] = None
    n_mh_moves: int = 1
    proposal_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigInvalid(f"n_particles must be >= 2, got {self.n_particles}")
        if self.n_steps < 1:
            raise ConfigInvalid(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0 < self.ess_threshold < 1:
            raise ConfigInvalid(f"ess_threshold must lie in (0, 1), got {self.ess_threshold}")
        if not self.proposal_scale > 0:
            raise ConfigInvalid("proposal_scale must be positive")
        if self.n_mh_moves < 1:
            raise ConfigInvalid("n_mh_moves must be >= 1")
        if self.anneal_schedule is not None:
            sched = tuple(float(g) for g in self.anneal_schedule)
            if len(sched) != self.n_steps + 1:
                raise ConfigInvalid(
                    f"anneal_schedule needs n_steps + 1 = {self.n_steps + 1} entries, got {len(sched)}"
                )
            if sched[0] != 0.0 or sched[-1] != 1.0 or any(b <= a for a, b in zip(sched, sched[1:])):
                raise ConfigInvalid("anneal_schedule must increase strictly from 0 to 1")
            object.__setattr__(self, "anneal_schedule", sched)

    def schedule(self) -> np.ndarray:
        if self.anneal_schedule is not None:
            return np.array(self.anneal_schedule)
        return np.arange(self.n_steps + 1) / self.n_steps


def power_schedule(n_steps: int, exponent: float) -> tuple:
    """``gamma_t = (t / n) ** exponent``; exponent 1 is the linear schedule."""
    g = (np.arange(n_steps + 1) / n_steps) ** exponent
    g[0], g[-1] = 0.0, 1.0
    return tuple(float(x) for x in g)


@dataclass(frozen=True)
class StepRecord:
    step: int
    gamma: float
    ess: float
    resampled: bool
    acceptance_rate: float


@dataclass(frozen=True)
class ParticleEnsemble:
    particles: np.ndarray
    log_unnorm_weights: np.ndarray
    weights: np.ndarray
    gamma: float = 0.0
    step_index: int = 0
    rng_state_digest: str = ""
    loglik: Optional[np.ndarray] = None
    trace: tuple = ()

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def unnorm_weights(self) -> np.ndarray:
        return np.exp(self.log_unnorm_weights)


class AnnealedTarget:
    """Tempered density family built from a log-prior, log-likelihood and prior sampler.

    All callables are vectorized over a leading particle axis.
    """

    def __init__(self, dim: int, log_likelihood: Callable, log_prior: Callable = None,
                 sample_prior: Callable = None):
        self.dim = dim
        self._loglik = log_likelihood
        self._log_prior = log_prior or standard_normal_log_prior
        self._sample_prior = sample_prior or (lambda rng, n: rng.standard_normal((n, dim)))

    def log_likelihood(self, theta):
        return np.asarray(self._loglik(theta), dtype=float)

    def log_prior(self, theta):
        return np.asarray(self._log_prior(theta), dtype=float)

    def sample_prior(self, rng, n):
        return np.asarray(self._sample_prior(rng, n), dtype=float).reshape(n, self.dim)

    def log_density(self, theta, gamma):
        return self.log_prior(theta) + gamma * self.log_likelihood(theta)


def standard_normal_log_prior(theta):
    theta = np.atleast_2d(theta)
    return -0.5 * np.sum(theta * theta, axis=1) - 0.5 * theta.shape[1] * LOG_2PI


def ess(weights) -> float:
    """Effective sample size ``1 / sum(W^2)`` of normalized weights."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)) \
            or abs(w.sum() - 1.0) > 1e-9:
        raise NotASimplex("weights must be a non-negative vector summing to 1")
    return float(1.0 / np.dot(w, w))


def normalize_log_weights(log_w):
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise TargetNonFinite("all importance weights vanished")
    w = np.exp(log_w - total)
    return w / w.sum()


def systematic_indices(weights, rng) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)


def resample(ensemble: ParticleEnsemble, rng) -> ParticleEnsemble:
    """Systematic resampling; weights reset to uniform."""
    idx = systematic_indices(ensemble.weights, rng)
    n = ensemble.n
    return replace(
        ensemble,
        particles=ensemble.particles[idx].copy(),
        log_unnorm_weights=np.zeros(n),
        weights=np.full(n, 1.0 / n),
        loglik=None if ensemble.loglik is None else ensemble.loglik[idx].copy(),
    )


def mh_move(particle, log_target: Callable, proposal_cov, rng):
    """One random-walk Metropolis-Hastings step for a single particle.

    ``log_target`` maps a 1-D parameter vector to a scalar log density.
    Returns ``(new_particle, accepted)``.
    """
    x = np.asarray(particle, dtype=float)
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=float))
    if np.all(cov == 0):
        step = np.zeros_like(x)
    else:
        step = np.linalg.cholesky(cov + 0.0) @ rng.standard_normal(x.size)
    proposal = x + step
    lp_cur = log_target(x)
    if not np.isfinite(lp_cur):
        raise TargetNonFinite("current log target is not finite")
    lp_new = log_target(proposal)
    if np.isnan(lp_new):
        raise TargetNonFinite("proposal log target is NaN")
    if rng.random() < math.exp(min(0.0, lp_new - lp_cur)):
        return proposal, True
    return x, False


def _step_rng(config: SmcConfig, stream: Sequence[int], step: int):
    return np.random.default_rng(np.random.SeedSequence([config.seed, *stream, step]))


def _proposal_std(particles, weights, config: SmcConfig):
    mean = weights @ particles
    var = weights @ (particles - mean) ** 2
    d = particles.shape[1]
    var = config.proposal_scale * (2.38**2 / d) * var
    return np.sqrt(np.maximum(var, config.proposal_floor))


def _check_loglik(ll, step, label):
    bad = np.isnan(ll) | (ll == np.inf)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise TargetNonFinite(f"{label} log-likelihood not finite at step {step}, particle {i}",
                              step=step, particle=i)


def run_smc(target, config: SmcConfig = SmcConfig(), stream: Sequence[int] = ()) -> ParticleEnsemble:
    """Sample ``target`` at gamma=1 by annealing from the prior."""
    n, d = config.n_particles, target.dim
    gammas = config.schedule()

    rng = _step_rng(config, stream, 0)
    theta = target.sample_prior(rng, n)
    ll = target.log_likelihood(theta)
    _check_loglik(ll, 0, "initial")
    lprior = target.log_prior(theta)
    log_w = np.zeros(n)
    trace = []

    for t in range(1, len(gammas)):
        g_prev, g = gammas[t - 1], gammas[t]
        rng = _step_rng(config, stream, t)

        # reweight the pre-move particles: p_t / p_{t-1} = L ** (g - g_prev)
        inc = np.where(np.isneginf(ll), -np.inf, (g - g_prev) * ll)
        log_w = log_w + inc
        W = normalize_log_weights(log_w)

        std = _proposal_std(theta, W, config)
        n_acc = 0
        for _ in range(config.n_mh_moves):
            prop = theta + rng.standard_normal((n, d)) * std
            u = rng.random(n)
            ll_prop = target.log_likelihood(prop)
            _check_loglik(ll_prop, t, "proposal")
            lprior_prop = target.log_prior(prop)
            with np.errstate(invalid="ignore"):
                log_ratio = (lprior_prop + g * ll_prop) - (lprior + g * ll)
            log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
            accept = np.log(u) < np.minimum(0.0, log_ratio)
            theta = np.where(accept[:, None], prop, theta)
            ll = np.where(accept, ll_prop, ll)
            lprior = np.where(accept, lprior_prop, lprior)
            n_acc += int(accept.sum())

        ess_t = ess(W)
        resampled = ess_t < config.ess_threshold * n
        if resampled:
            idx = systematic_indices(W, rng)
            theta, ll, lprior = theta[idx], ll[idx], lprior[idx]
            log_w = np.zeros(n)
            W = np.full(n, 1.0 / n)
        trace.append(StepRecord(t, float(g), ess_t, bool(resampled), n_acc / (n * config.n_mh_moves)))
        log.debug("smc step %d gamma=%.4f ess=%.1f resampled=%s", t, g, ess_t, resampled)

    digest = hashlib.sha256(repr((config.seed, tuple(stream), len(gammas) - 1)).encode()).hexdigest()[:16]
    return ParticleEnsemble(
        particles=theta,
        log_unnorm_weights=log_w,
        weights=W,
        gamma=float(gammas[-1]),
        step_index=len(gammas) - 1,
        rng_state_digest=digest,
        loglik=ll,
        trace=tuple(trace),
    )
