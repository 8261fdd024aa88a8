"""Ground-truth multi-timescale degradation and simulated frequency sensing."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NegativeFrequency
from .sdof_core import NominalModel, modal_state

log = logging.getLogger(__name__)

CASES = ("stiffness", "mass", "joint")


@dataclass(frozen=True)
class StiffnessDegradationParams:
    alpha_slow: float = 0.4e-3
    eps_slow: float = 0.005
    beta_slow: float = 7e-2
    alpha_fast: float = 0.8e-3
    eps_fast: float = 0.01
    beta_fast: float = 2e-1

    def __post_init__(self):
        for name in ("alpha_slow", "eps_slow", "beta_slow", "alpha_fast", "eps_fast", "beta_fast"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _default_steps():
    return ((200.0, 400.0, 1.0), (400.0, 600.0, 2.0), (600.0, 800.0, 3.0))


@dataclass(frozen=True)
class MassDegradationParams:
    beta: float = 0.15
    eps: float = 0.25
    # (t_start, t_end, level), half-open [t_start, t_end)
    steps: tuple = field(default_factory=_default_steps)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("sawtooth frequency beta must be positive")
        if self.eps < 0:
            raise ValueError("sawtooth amplitude eps must be non-negative")
        steps = tuple(tuple(float(x) for x in s) for s in self.steps)
        prev_end = -math.inf
        for start, end, _ in steps:
            if not start < end or start < prev_end:
                raise ValueError(f"mass steps must be ordered and non-overlapping: {steps}")
            prev_end = end
        object.__setattr__(self, "steps", steps)


def _exp_cos(t, alpha, eps, beta):
    return 0.5 * np.exp(-alpha * t) * (1.0 + eps * np.cos(beta * t)) / (1.0 + eps)


def stiffness_delta(t_s, params: StiffnessDegradationParams = StiffnessDegradationParams()):
    """Slow plus fast exponentially decaying, cosine-modulated stiffness loss."""
    t = np.asarray(t_s, dtype=float)
    out = (
        _exp_cos(t, params.alpha_slow, params.eps_slow, params.beta_slow)
        + _exp_cos(t, params.alpha_fast, params.eps_fast, params.beta_fast)
        - 1.0
    )
    return out if out.ndim else float(out)


def sawtooth(x):
    """Period-2pi ramp rising from -1 to 1; values in [-1, 1)."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.mod(x / (2.0 * np.pi), 1.0) - 1.0


def mass_slow(t_s, params: MassDegradationParams = MassDegradationParams()):
    t = np.asarray(t_s, dtype=float)
    out = np.zeros_like(t)
    for start, end, level in params.steps:
        out = np.where((t >= start) & (t < end), level, out)
    return out if out.ndim else float(out)


def mass_fast(t_s, params: MassDegradationParams = MassDegradationParams()):
    t = np.asarray(t_s, dtype=float)
    out = params.eps * sawtooth(params.beta * (t - np.pi / params.beta))
    return out if out.ndim else float(out)


def mass_delta(t_s, params: MassDegradationParams = MassDegradationParams()):
    t = np.asarray(t_s, dtype=float)
    out = np.asarray(mass_slow(t, params)) + np.asarray(mass_fast(t, params))
    return out if out.ndim else float(out)


def true_deltas(case: str, t_s, stiffness: StiffnessDegradationParams, mass: MassDegradationParams):
    """Ground-truth ``(dm, dk)`` arrays for a scenario case."""
    t = np.asarray(t_s, dtype=float)
    zeros = np.zeros_like(t)
    dk = stiffness_delta(t, stiffness) if case in ("stiffness", "joint") else zeros
    dm = mass_delta(t, mass) if case in ("mass", "joint") else zeros
    return np.asarray(dm, dtype=float), np.asarray(dk, dtype=float)


@dataclass(frozen=True)
class FrequencyObservation:
    t_s: float
    omega_ds: float
    lambda_re: Optional[float]
    sigma0: float

    def __post_init__(self):
        if self.t_s < 0:
            raise ValueError(f"service time must be non-negative, got {self.t_s}")


def _as_rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    if isinstance(rng_seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence(list(rng_seed)))
    return np.random.default_rng(rng_seed)


def observe_frequency(
    model: NominalModel,
    dm: float,
    dk: float,
    sigma0: float,
    rng_seed=None,
    t_s: float = 0.0,
    with_lambda: bool = False,
) -> FrequencyObservation:
    """Noisy damped-frequency reading with multiplicative Gaussian error.

    ``rng_seed`` may be an int, a sequence of ints (hashed through
    ``SeedSequence``) or a ``Generator``. One redraw is allowed when the
    noisy frequency is non-positive.
    """
    state = modal_state(model, dm, dk)
    if sigma0 == 0:
        lam = state.lambda_re if with_lambda else None
        return FrequencyObservation(t_s=float(t_s), omega_ds=state.omega_d, lambda_re=lam, sigma0=0.0)
    rng = _as_rng(rng_seed)
    g, g_lam = rng.standard_normal(2)
    omega = state.omega_d * (1.0 + sigma0 * g)
    if omega <= 0:
        omega = state.omega_d * (1.0 + sigma0 * rng.standard_normal())
        if omega <= 0:
            raise NegativeFrequency(f"noisy frequency non-positive twice at t_s={t_s}")
    lam = state.lambda_re * (1.0 + sigma0 * g_lam) if with_lambda else None
    return FrequencyObservation(t_s=float(t_s), omega_ds=float(omega), lambda_re=lam, sigma0=float(sigma0))


def observation_times(tau: float, n_obs: int) -> np.ndarray:
    return np.linspace(0.0, tau, n_obs)


def simulate_observations(
    model: NominalModel,
    case: str,
    times: Sequence[float],
    sigma0: float,
    seed: int,
    stiffness: StiffnessDegradationParams = StiffnessDegradationParams(),
    mass: MassDegradationParams = MassDegradationParams(),
    index_offset: int = 0,
) -> list[FrequencyObservation]:
    """Observations at ``times``; point ``i`` uses the stream ``(seed, i + index_offset)``."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    dm, dk = true_deltas(case, times, stiffness, mass)
    out = []
    for i, t in enumerate(times):
        try:
            obs = observe_frequency(
                model, float(dm[i]), float(dk[i]), sigma0,
                rng_seed=(seed, i + index_offset), t_s=float(t), with_lambda=(case == "joint"),
            )
        except NegativeFrequency as exc:
            log.warning("observation %d rejected: %s", i, exc)
            continue
        out.append(obs)
    return out


def generate_dataset(config) -> list[FrequencyObservation]:
    """Equally spaced observations over ``[0, tau]`` for a scenario config."""
    from .errors import InsufficientData

    if config.n_obs < 2:
        raise InsufficientData(f"need at least 2 observations, got n_obs={config.n_obs}")
    if not config.tau > 0:
        raise ValueError(f"tau must be positive, got {config.tau}")
    return simulate_observations(
        config.nominal_model(),
        config.case,
        observation_times(config.tau, config.n_obs),
        config.sigma0,
        config.seed,
        config.stiffness_params,
        config.mass_params,
    )
