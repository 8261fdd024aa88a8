"""A single Gaussian-process expert with quadratic mean and Matern covariance.

Times reaching this module are already standardized (see ``TimeStandardizer``).
The expert's observation density is pointwise: ``N(y | h . phi(t), sf^2 + sn^2)``,
i.e. the kernel diagonal plus observation noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_BASIS = 3
# h (3), log_l, log_sf, log_sn
EXPERT_DIM = N_BASIS + 3
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TimeStandardizer:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, t) -> "TimeStandardizer":
        t = np.asarray(t, dtype=float)
        std = float(np.std(t))
        return cls(mean=float(np.mean(t)), std=std if std > 0 else 1.0)

    def __call__(self, t):
        return (np.asarray(t, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class GPExpertParams:
    h: tuple
    log_l: float = 0.0
    log_sf: float = 0.0
    log_sn: float = -2.0

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        if len(h) != N_BASIS:
            raise ValueError(f"mean coefficients must have length {N_BASIS}")
        values = h + (self.log_l, self.log_sf, self.log_sn)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("expert hyperparameters must be finite")
        object.__setattr__(self, "h", h)

    @property
    def length_scale(self) -> float:
        return math.exp(self.log_l)

    @property
    def signal_var(self) -> float:
        return math.exp(2.0 * self.log_sf)

    @property
    def noise_var(self) -> float:
        return math.exp(2.0 * self.log_sn)

    @property
    def total_var(self) -> float:
        return self.signal_var + self.noise_var

    def to_vector(self) -> np.ndarray:
        return np.array(self.h + (self.log_l, self.log_sf, self.log_sn))

    @classmethod
    def from_vector(cls, v) -> "GPExpertParams":
        v = np.asarray(v, dtype=float)
        return cls(h=tuple(v[:N_BASIS]), log_l=float(v[3]), log_sf=float(v[4]), log_sn=float(v[5]))


def mean_basis(t_bar) -> np.ndarray:
    """Quadratic basis ``[1, t, t^2]``; trailing axis has length 3."""
    t = np.asarray(t_bar, dtype=float)
    return np.stack([np.ones_like(t), t, t * t], axis=-1)


def matern_kernel(t1, t2, params: GPExpertParams, nu: float = 2.5):
    r = np.abs(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)) / params.length_scale
    if nu == 2.5:
        a = math.sqrt(5.0) * r
        k = (1.0 + a + a * a / 3.0) * np.exp(-a)
    elif nu == 1.5:
        a = math.sqrt(3.0) * r
        k = (1.0 + a) * np.exp(-a)
    else:
        raise ValueError(f"unsupported Matern smoothness nu={nu}; use 1.5 or 2.5")
    return params.signal_var * k


def gram_matrix(t, params: GPExpertParams, nu: float = 2.5) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return matern_kernel(t[:, None], t[None, :], params, nu)


def expert_mean(t_bar, params: GPExpertParams):
    return mean_basis(t_bar) @ np.asarray(params.h)


def pointwise_log_density(y, t_bar, params: GPExpertParams):
    var = params.total_var
    resid = np.asarray(y, dtype=float) - expert_mean(t_bar, params)
    return -0.5 * (LOG_2PI + math.log(var) + resid * resid / var)


def expert_predict(t_star_bar, params: GPExpertParams):
    """Predictive ``(mean, variance)``; the variance is stationary in time."""
    mean = expert_mean(t_star_bar, params)
    return mean, np.full_like(np.asarray(mean, dtype=float), params.total_var)
