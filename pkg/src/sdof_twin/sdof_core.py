"""Nominal single-degree-of-freedom model and its modal algebra.

Mass and stiffness changes are expressed as fractional deltas about the
nominal system, ``m = m0 * (1 + dm)`` and ``k = k0 * (1 + dk)``; damping is
held at ``c0`` throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateMass,
    DegenerateStiffness,
    NonPositiveParameter,
    Overdamped,
)


@dataclass(frozen=True)
class NominalModel:
    m0: float
    c0: float
    k0: float
    omega0: float = field(init=False)
    zeta0: float = field(init=False)
    period0: float = field(init=False)

    def __post_init__(self):
        if not (self.m0 > 0):
            raise NonPositiveParameter(f"mass must be positive, got m0={self.m0}")
        if not (self.k0 > 0):
            raise NonPositiveParameter(f"stiffness must be positive, got k0={self.k0}")
        if not (self.c0 >= 0):
            raise NonPositiveParameter(f"damping must be non-negative, got c0={self.c0}")
        omega0 = math.sqrt(self.k0 / self.m0)
        zeta0 = self.c0 / (2.0 * math.sqrt(self.k0 * self.m0))
        if zeta0 >= 1.0:
            raise Overdamped(f"nominal damping ratio {zeta0:.6g} >= 1")
        object.__setattr__(self, "omega0", omega0)
        object.__setattr__(self, "zeta0", zeta0)
        object.__setattr__(self, "period0", 2.0 * math.pi / omega0)

    @property
    def omega_d0(self) -> float:
        """Nominal damped natural frequency."""
        return self.omega0 * math.sqrt(1.0 - self.zeta0**2)

    @property
    def lambda_re0(self) -> float:
        return -self.zeta0 * self.omega0

    @classmethod
    def normalized(cls, zeta0: float = 0.05) -> "NominalModel":
        """Unit-period model: m0=1, k0=(2 pi)^2, c0 set by ``zeta0``."""
        k0 = (2.0 * math.pi) ** 2
        return cls(m0=1.0, c0=2.0 * zeta0 * math.sqrt(k0), k0=k0)

    def to_dict(self) -> dict:
        return {"m0": self.m0, "c0": self.c0, "k0": self.k0}


def nominal_from_physical(m0: float, c0: float, k0: float) -> NominalModel:
    return NominalModel(m0=m0, c0=c0, k0=k0)


@dataclass(frozen=True)
class ModalState:
    omega: float
    zeta: float
    omega_d: float
    lambda_re: float
    lambda_im: float


def modal_state(model: NominalModel, dm: float, dk: float) -> ModalState:
    """Instantaneous modal quantities of the system with deltas ``dm``, ``dk``."""
    if not (1.0 + dm > 0):
        raise DegenerateMass(f"1 + dm must be positive, got dm={dm}")
    if not (1.0 + dk > 0):
        raise DegenerateStiffness(f"1 + dk must be positive, got dk={dk}")
    omega = model.omega0 * math.sqrt((1.0 + dk) / (1.0 + dm))
    zeta = model.zeta0 / (math.sqrt(1.0 + dm) * math.sqrt(1.0 + dk))
    if zeta >= 1.0:
        raise Overdamped(f"damping ratio {zeta:.6g} >= 1 at dm={dm}, dk={dk}")
    omega_d = omega * math.sqrt(1.0 - zeta**2)
    return ModalState(
        omega=omega,
        zeta=zeta,
        omega_d=omega_d,
        lambda_re=-omega * zeta,
        lambda_im=omega_d,
    )


@dataclass(frozen=True)
class PredictedResponse:
    time_grid: np.ndarray
    displacement: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        n = len(self.time_grid)
        if len(self.displacement) != n or len(self.velocity) != n:
            raise ValueError("response arrays must share the time grid length")
        if n > 1 and np.any(np.diff(self.time_grid) <= 0):
            raise ValueError("time grid must be strictly increasing")


def free_response(
    model: NominalModel,
    dm: float,
    dk: float,
    u_init: float,
    v_init: float,
    time_grid,
) -> PredictedResponse:
    """Closed-form underdamped free vibration from initial conditions."""
    state = modal_state(model, dm, dk)
    t = np.asarray(time_grid, dtype=float)
    decay = state.zeta * state.omega
    wd = state.omega_d
    a = u_init
    b = (v_init + decay * u_init) / wd
    env = np.exp(-decay * t)
    cos, sin = np.cos(wd * t), np.sin(wd * t)
    u = env * (a * cos + b * sin)
    v = env * ((b * wd - decay * a) * cos - (a * wd + decay * b) * sin)
    return PredictedResponse(time_grid=t, displacement=u, velocity=v)
