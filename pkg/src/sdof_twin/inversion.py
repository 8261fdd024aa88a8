"""Frequency-to-parameter inversion for the three degradation cases.

All distances are normalized by the nominal natural frequency and signed,
``d = (omega_d0 - omega_obs) / omega0``, so stiffening and softening are both
recoverable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .degradation import CASES, FrequencyObservation
from .errors import (
    AllObservationsRejected,
    ComplexRoot,
    InvalidFrequency,
    ResultOutOfRange,
    UndampedAmbiguity,
)
from .sdof_core import NominalModel


@dataclass(frozen=True)
class InversionDiagnostics:
    d1_tilde: Optional[float] = None
    d2_tilde: Optional[float] = None
    dR_tilde: Optional[float] = None
    dI_tilde: Optional[float] = None


@dataclass(frozen=True)
class DeltaEstimate:
    t_s: float
    dk_hat: Optional[float] = None
    dm_hat: Optional[float] = None
    diagnostics: InversionDiagnostics = field(default_factory=InversionDiagnostics)

    def __post_init__(self):
        if self.dk_hat is None and self.dm_hat is None:
            raise ValueError("an estimate needs at least one of dk_hat, dm_hat")


def _check_frequency(obs: FrequencyObservation):
    if not (math.isfinite(obs.omega_ds) and obs.omega_ds > 0):
        raise InvalidFrequency(f"damped frequency must be positive, got {obs.omega_ds} at t_s={obs.t_s}")


def _distance(obs: FrequencyObservation, model: NominalModel) -> float:
    return (model.omega_d0 - obs.omega_ds) / model.omega0


def invert_stiffness(obs: FrequencyObservation, model: NominalModel) -> DeltaEstimate:
    _check_frequency(obs)
    d1 = _distance(obs, model)
    dk = -d1 * (2.0 * math.sqrt(1.0 - model.zeta0**2) - d1)
    if not 1.0 + dk > 0:
        raise ResultOutOfRange(f"1 + dk_hat = {1.0 + dk:.3g} <= 0 at t_s={obs.t_s}")
    return DeltaEstimate(t_s=obs.t_s, dk_hat=dk, diagnostics=InversionDiagnostics(d1_tilde=d1))


def invert_mass(obs: FrequencyObservation, model: NominalModel) -> DeltaEstimate:
    _check_frequency(obs)
    z2 = model.zeta0**2
    s = math.sqrt(1.0 - z2)
    d2 = _distance(obs, model)
    radicand = 1.0 - 4.0 * d2**2 * z2 + 8.0 * d2 * s * z2 - 4.0 * z2 + 4.0 * z2**2
    if radicand < 0:
        raise ComplexRoot(f"negative radicand {radicand:.3g} at t_s={obs.t_s}")
    denom = 2.0 * (s - d2) ** 2
    dm = (-2.0 * d2**2 + 4.0 * d2 * s - 1.0 + 2.0 * z2) / denom + math.sqrt(radicand) / denom
    if not 1.0 + dm > 0:
        raise ResultOutOfRange(f"1 + dm_hat = {1.0 + dm:.3g} <= 0 at t_s={obs.t_s}")
    return DeltaEstimate(t_s=obs.t_s, dm_hat=dm, diagnostics=InversionDiagnostics(d2_tilde=d2))


def two_distance_dk(dR: float, dI: float, zeta0: float) -> float:
    """Alternative stiffness expression in the two distances, kept for comparison only."""
    return (zeta0 * dR**2 - (1.0 - 2.0 * zeta0**2) * dI + zeta0**2 * dI**2) / (zeta0 + dR)


def invert_mass_stiffness(
    obs: FrequencyObservation, model: NominalModel, use_two_distance_dk: bool = False
) -> DeltaEstimate:
    """Joint inversion from the real part and the imaginary part of the eigenvalue."""
    if model.zeta0 == 0:
        raise UndampedAmbiguity("mass and stiffness are not separately identifiable without damping")
    _check_frequency(obs)
    if obs.lambda_re is None or not (math.isfinite(obs.lambda_re) and obs.lambda_re < 0):
        raise InvalidFrequency(f"eigenvalue real part must be negative, got {obs.lambda_re} at t_s={obs.t_s}")
    zeta0, omega0 = model.zeta0, model.omega0
    dR = (model.lambda_re0 - obs.lambda_re) / omega0
    dI = math.sqrt(1.0 - zeta0**2) - obs.omega_ds / omega0
    dm = -dR / (zeta0 + dR)
    if not 1.0 + dm > 0:
        raise ResultOutOfRange(f"1 + dm_hat = {1.0 + dm:.3g} <= 0 at t_s={obs.t_s}")
    if use_two_distance_dk:
        dk = two_distance_dk(dR, dI, zeta0)
    else:
        dk = (1.0 + dm) * (obs.omega_ds / omega0) ** 2 + zeta0**2 / (1.0 + dm) - 1.0
    if not 1.0 + dk > 0:
        raise ResultOutOfRange(f"1 + dk_hat = {1.0 + dk:.3g} <= 0 at t_s={obs.t_s}")
    return DeltaEstimate(
        t_s=obs.t_s, dk_hat=dk, dm_hat=dm,
        diagnostics=InversionDiagnostics(dR_tilde=dR, dI_tilde=dI),
    )


INVERTERS = {
    "stiffness": invert_stiffness,
    "mass": invert_mass,
    "joint": invert_mass_stiffness,
}

_REJECTABLE = (InvalidFrequency, ResultOutOfRange, ComplexRoot)


@dataclass(frozen=True)
class Rejection:
    t_s: float
    reason: str


@dataclass(frozen=True)
class ProcessedDataset:
    case: str
    estimates: tuple
    rejected: tuple

    def __len__(self):
        return len(self.estimates)

    def series(self, quantity: str):
        """``(t, y)`` arrays for ``quantity`` in {"dk", "dm"}."""
        import numpy as np

        attr = {"dk": "dk_hat", "dm": "dm_hat"}[quantity]
        t = np.array([e.t_s for e in self.estimates], dtype=float)
        y = np.array([getattr(e, attr) for e in self.estimates], dtype=float)
        return t, y

    def rows(self):
        """Training-table rows sorted by time, rejected rows included."""
        out = [(e.t_s, e.dk_hat, e.dm_hat, False) for e in self.estimates]
        out += [(r.t_s, None, None, True) for r in self.rejected]
        return sorted(out, key=lambda row: row[0])


def process_dataset(observations, model: NominalModel, case: str) -> ProcessedDataset:
    """Invert every observation; unphysical ones are excluded and reported."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    observations = list(observations)
    if not observations:
        raise AllObservationsRejected("no observations to process")
    if case == "joint" and model.zeta0 == 0:
        raise UndampedAmbiguity("joint inversion requires a damped nominal model")
    invert = INVERTERS[case]
    accepted, rejected = [], []
    for obs in observations:
        try:
            accepted.append(invert(obs, model))
        except _REJECTABLE as exc:
            rejected.append(Rejection(t_s=obs.t_s, reason=f"{type(exc).__name__}: {exc}"))
    if not accepted:
        raise AllObservationsRejected(f"all {len(observations)} observations rejected")
    return ProcessedDataset(case=case, estimates=tuple(accepted), rejected=tuple(rejected))
