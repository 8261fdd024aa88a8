"""EM over mixing coefficients with an SMC-sampled E-step."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from .errors import InsufficientData
from .gp_expert import TimeStandardizer
from .moe_gp import (
    MixingCoefficients,
    MixtureTarget,
    MoEGPModel,
    _log_pi,
    batch_log_likelihood,
)
from .smc import SmcConfig, run_smc, standard_normal_log_prior

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    n_experts: int = 4
    epsilon: float = 1e-3
    max_iters: int = 20
    smc: SmcConfig = field(default_factory=SmcConfig)
    pi_init: Optional[tuple] = None
    m_step_maxiter: int = 200
    m_step_gtol: float = 1e-10
    prune_tol: float = 0.0

    def __post_init__(self):
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.pi_init is not None:
            MixingCoefficients(tuple(self.pi_init))
            if len(self.pi_init) != self.n_experts:
                raise ValueError("pi_init length must equal n_experts")

    def initial_mixing(self) -> MixingCoefficients:
        if self.pi_init is None:
            return MixingCoefficients.uniform(self.n_experts)
        return MixingCoefficients(tuple(self.pi_init))


@dataclass(frozen=True)
class EmIteration:
    iteration: int
    pi: tuple
    em_error: float
    expected_log_posterior: float
    expected_log_posterior_prev: float
    m_step_ok: bool
    final_ess: float
    n_resamples: int
    mean_acceptance: float


@dataclass(frozen=True)
class EmTrace:
    iterations: tuple
    converged: bool

    def __len__(self):
        return len(self.iterations)


class ExpectedLogPosterior:
    """``pi -> sum_i W_i log p(pi, theta_i | data)`` for a fixed weighted ensemble.

    The prior over ``pi`` is flat on the simplex, so only the likelihood term
    varies with ``pi``; the prior over theta enters as a constant.
    """

    def __init__(self, ensemble, t_bar, y, n_experts: int):
        self.weights = ensemble.weights
        self.particles = ensemble.particles
        self.t_bar = np.asarray(t_bar, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n_experts = n_experts
        self._prior_term = float(self.weights @ standard_normal_log_prior(self.particles))
        live = self.weights > 0
        self._live = live

    def __call__(self, pi) -> float:
        ll = batch_log_likelihood(
            self.particles[self._live], self.t_bar, self.y, _log_pi(pi), self.n_experts
        )
        w = self.weights[self._live]
        return self._prior_term + float(w @ ll)


def e_step(pi: MixingCoefficients, t_bar, y, smc_config: SmcConfig, n_experts: int,
           stream=(), sampler: Callable = run_smc):
    """Sample ``p(theta | pi, data)`` and return ``(ensemble, functional)``."""
    target = MixtureTarget(t_bar, y, pi, n_experts)
    ensemble = sampler(target, smc_config, stream)
    return ensemble, ExpectedLogPosterior(ensemble, t_bar, y, n_experts)


def m_step(functional: Callable, pi_prev: MixingCoefficients, maxiter: int = 200,
           gtol: float = 1e-10, prune_tol: float = 0.0):
    """Maximize ``functional`` over the simplex from ``pi_prev``.

    The softmax parameterization cannot reach the simplex boundary, so
    entries that end below ``prune_tol`` are snapped to exactly 0 (kept only
    if that does not lose ascent). Returns ``(pi_new, ok)``; ``ok`` is False
    when no ascent was found, in which case ``pi_prev`` is returned unchanged.
    """
    m = len(pi_prev)
    if m == 1:
        return MixingCoefficients((1.0,)), True
    p0 = pi_prev.as_array()
    f0 = functional(p0)
    # softmax with the last logit pinned at 0; entries at exactly 0 start at a tiny floor
    logits0 = np.log(np.maximum(p0, 1e-300))
    logits0 = logits0[:-1] - logits0[-1]

    def neg(a):
        val = functional(softmax(np.append(a, 0.0)))
        return -val if np.isfinite(val) else np.inf

    res = minimize(neg, logits0, method="BFGS", options={"maxiter": maxiter, "gtol": gtol})
    pi_new = MixingCoefficients.normalized(softmax(np.append(res.x, 0.0)))
    f_new = functional(pi_new.as_array())
    if prune_tol > 0 and np.any(pi_new.as_array() < prune_tol):
        arr = pi_new.as_array()
        arr[arr < prune_tol] = 0.0
        snapped = MixingCoefficients.normalized(arr)
        f_snap = functional(snapped.as_array())
        if np.isfinite(f_snap) and f_snap >= f0 - 1e-10:
            pi_new, f_new = snapped, f_snap
    if not (np.isfinite(f_new) and f_new >= f0 - 1e-10):
        log.warning("m-step found no ascent (%.6g < %.6g); keeping previous pi", f_new, f0)
        return pi_prev, False
    return pi_new, True


def fit(t, y, config: EmConfig = EmConfig(), sampler: Callable = run_smc, provenance=None):
    """Alternate E- and M-steps until ``||pi - pi_prev|| <= epsilon``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    if len(t) < config.n_experts + 2:
        raise InsufficientData(
            f"need at least n_experts + 2 = {config.n_experts + 2} points, got {len(t)}"
        )
    standardizer = TimeStandardizer.fit(t)
    t_bar = standardizer(t)
    pi = config.initial_mixing()
    records = []
    converged = False
    ensemble = None
    for it in range(1, config.max_iters + 1):
        pi_prev = pi
        ensemble, functional = e_step(pi, t_bar, y, config.smc, config.n_experts,
                                      stream=(it,), sampler=sampler)
        pi, ok = m_step(functional, pi_prev, config.m_step_maxiter, config.m_step_gtol,
                        config.prune_tol)
        em_error = float(np.linalg.norm(pi.as_array() - pi_prev.as_array()))
        trace = ensemble.trace
        records.append(EmIteration(
            iteration=it,
            pi=pi.pi,
            em_error=em_error,
            expected_log_posterior=functional(pi.as_array()),
            expected_log_posterior_prev=functional(pi_prev.as_array()),
            m_step_ok=ok,
            final_ess=trace[-1].ess if trace else float("nan"),
            n_resamples=sum(r.resampled for r in trace),
            mean_acceptance=float(np.mean([r.acceptance_rate for r in trace])) if trace else float("nan"),
        ))
        log.info("em iter %d error=%.3g pi=%s", it, em_error, np.round(pi.as_array(), 4))
        if em_error <= config.epsilon:
            converged = True
            break
    model = MoEGPModel(
        n_experts=config.n_experts,
        mixing=pi,
        ensemble=ensemble,
        standardizer=standardizer,
        provenance=dict(provenance or {}),
    )
    return model, EmTrace(iterations=tuple(records), converged=converged)
