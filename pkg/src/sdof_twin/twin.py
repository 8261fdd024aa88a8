"""Digital-twin orchestration: observations -> deltas -> ME-GP fits -> forecasts."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .degradation import FrequencyObservation, generate_dataset, true_deltas
from .em import EmTrace, fit
from .errors import EmptyEnsemble, InsufficientData, NonMonotoneTimestamps, TwinError
from .inversion import ProcessedDataset, process_dataset
from .moe_gp import DEFAULT_PROBS, MoEGPModel, predictive_grid
from .sdof_core import ModalState, PredictedResponse, free_response, modal_state

log = logging.getLogger(__name__)

TWIN_SCHEMA = "sdof_twin.twin/1"
METHODS = ("me-gp", "gp")
_QUANTITY_INDEX = {"dm": 0, "dk": 1}


def quantity_seed(seed: int, quantity: str) -> int:
    """Sampling seed for one tracked quantity; shared by both methods."""
    state = np.random.SeedSequence([seed, _QUANTITY_INDEX[quantity]]).generate_state(1)
    return int(state[0])


def data_digest(t, y) -> str:
    payload = json.dumps([[float(a), float(b)] for a, b in zip(t, y)])
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class QuantityFit:
    method: str
    quantity: str
    model: MoEGPModel
    trace: Optional[EmTrace] = None


@dataclass(frozen=True)
class TwinState:
    config: ScenarioConfig
    observations: tuple
    processed: ProcessedDataset
    fits: dict
    provenance: tuple = ()
    last_update_time: float = 0.0
    simulated: bool = False
    schema: str = TWIN_SCHEMA

    def __post_init__(self):
        expected = set(self.config.quantities())
        got = {q for (_, q) in self.fits}
        if got != expected:
            raise ValueError(f"twin needs models for {sorted(expected)}, got {sorted(got)}")

    def model(self, quantity: str, method: str = "me-gp") -> MoEGPModel:
        return self.fits[(method, quantity)].model

    @property
    def methods(self) -> tuple:
        return tuple(m for m in METHODS if any(k[0] == m for k in self.fits))


def simulate(config: ScenarioConfig) -> list:
    if config.n_obs < 2:
        raise InsufficientData(f"need at least 2 observations, got n_obs={config.n_obs}")
    return generate_dataset(config)


def process(observations, config: ScenarioConfig) -> ProcessedDataset:
    return process_dataset(observations, config.nominal_model(), config.case)


def fit_quantity(t, y, config: ScenarioConfig, quantity: str, n_experts: int,
                 method: str = "me-gp") -> QuantityFit:
    seed = quantity_seed(config.seed, quantity)
    em_cfg = config.em_config(n_experts, seed)
    prov = {"quantity": quantity, "data_digest": data_digest(t, y), "n_points": int(len(t)),
            "config_digest": config.digest()}
    model, trace = fit(t, y, em_cfg, provenance=prov)
    return QuantityFit(method=method, quantity=quantity, model=model, trace=trace)


def fit_baseline_gp(t, y, config: ScenarioConfig, quantity: str) -> QuantityFit:
    """Single GP expert trained through the same EM/SMC path with pi = [1]."""
    if len(t) < 3:
        raise InsufficientData(f"baseline needs at least 3 points, got {len(t)}")
    return fit_quantity(t, y, config, quantity, 1, method="gp")


def train(config: ScenarioConfig, observations, processed: Optional[ProcessedDataset] = None,
          provenance: tuple = (), simulated: bool = False) -> TwinState:
    observations = tuple(observations)
    processed = processed or process(observations, config)
    fits = {}
    for q in config.quantities():
        t, y = processed.series(q)
        fits[("me-gp", q)] = fit_quantity(t, y, config, q, config.experts)
        if config.baseline:
            fits[("gp", q)] = fit_baseline_gp(t, y, config, q)
    t_all = np.array([o.t_s for o in observations])
    omega = np.array([o.omega_ds for o in observations])
    record = {"data_digest": data_digest(t_all, omega), "n_obs": len(observations),
              "t_max": float(t_all.max())}
    return TwinState(
        config=config,
        observations=observations,
        processed=processed,
        fits=fits,
        provenance=tuple(provenance) + (record,),
        last_update_time=float(t_all.max()),
        simulated=simulated,
    )


def update(twin: TwinState, new_observations) -> TwinState:
    """Refit on old + new observations; the input twin is left untouched."""
    new_observations = tuple(new_observations)
    if not new_observations:
        return twin
    times = [o.t_s for o in new_observations]
    if any(b <= a for a, b in zip(times, times[1:])) or times[0] <= twin.last_update_time:
        raise NonMonotoneTimestamps(
            f"new observations must be strictly increasing and after t={twin.last_update_time}"
        )
    return train(twin.config, twin.observations + new_observations, provenance=twin.provenance,
                 simulated=twin.simulated)


# -- prediction ------------------------------------------------------------

@dataclass(frozen=True)
class QuantityForecast:
    method: str
    quantity: str
    t_star: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    quantiles: np.ndarray
    probs: tuple = DEFAULT_PROBS


@dataclass(frozen=True)
class ResponseForecast:
    t_star: float
    band: str
    dm: float
    dk: float
    unphysical: bool
    modal: Optional[ModalState] = None
    response: Optional[PredictedResponse] = None


@dataclass(frozen=True)
class Forecast:
    quantities: dict
    responses: tuple = field(default_factory=tuple)


BANDS = ("low", "median", "high", "mean")


def _band_value(fc: QuantityForecast, band: str, j: int) -> float:
    if band == "mean":
        return float(fc.mean[j])
    k = fc.quantiles.shape[1]
    return float(fc.quantiles[j, {"low": 0, "median": k // 2, "high": k - 1}[band]])


def response_at(config: ScenarioConfig, dm: float, dk: float, t_star: float, band: str,
                with_history: bool = True) -> ResponseForecast:
    if 1.0 + dm <= 0 or 1.0 + dk <= 0:
        return ResponseForecast(t_star, band, dm, dk, unphysical=True)
    model = config.nominal_model()
    try:
        state = modal_state(model, dm, dk)
        history = None
        if with_history:
            p = config.prediction
            grid = np.linspace(0.0, p.response_periods * model.period0, p.response_points)
            history = free_response(model, dm, dk, p.u_init, p.v_init, grid)
    except TwinError as exc:
        log.info("no response at t*=%g (%s): %s", t_star, band, exc)
        return ResponseForecast(t_star, band, dm, dk, unphysical=True)
    return ResponseForecast(t_star, band, dm, dk, unphysical=False, modal=state, response=history)


def predict_future(twin: TwinState, t_star=None, probs=DEFAULT_PROBS,
                   with_history: bool = True) -> Forecast:
    config = twin.config
    t_star = config.grid() if t_star is None else np.atleast_1d(np.asarray(t_star, dtype=float))
    out = {}
    for key, qfit in sorted(twin.fits.items()):
        if qfit.model.ensemble is None or qfit.model.ensemble.n == 0:
            raise EmptyEnsemble(f"model for {key} has no particles")
        mean, var, q = predictive_grid(qfit.model, t_star, probs)
        out[key] = QuantityForecast(key[0], key[1], t_star, mean, var, q, tuple(probs))
    responses = []
    for j, ts in enumerate(t_star):
        for band in BANDS:
            d = {"dm": 0.0, "dk": 0.0}
            for q in config.quantities():
                d[q] = _band_value(out[("me-gp", q)], band, j)
            responses.append(response_at(config, d["dm"], d["dk"], float(ts), band, with_history))
    return Forecast(quantities=out, responses=tuple(responses))


def ground_truth(config: ScenarioConfig, quantity: str, t) -> np.ndarray:
    dm, dk = true_deltas(config.case, t, config.stiffness_params, config.mass_params)
    return dm if quantity == "dm" else dk


def rmse(forecast: QuantityForecast, config: ScenarioConfig, lo: float = -np.inf,
         hi: float = np.inf) -> float:
    """RMSE of the predictive mean against ground truth on ``lo < t <= hi``."""
    t = forecast.t_star
    mask = (t > lo) & (t <= hi)
    truth = ground_truth(config, forecast.quantity, t[mask])
    return float(np.sqrt(np.mean((forecast.mean[mask] - truth) ** 2)))


def coverage(forecast: QuantityForecast, config: ScenarioConfig) -> float:
    truth = ground_truth(config, forecast.quantity, forecast.t_star)
    inside = (truth >= forecast.quantiles[:, 0]) & (truth <= forecast.quantiles[:, -1])
    return float(np.mean(inside))


def run_pipeline(config: ScenarioConfig, out_dir=None):
    """Simulate, invert, fit, predict; optionally write the artifact bundle.

    Returns ``(twin, forecast)``. With ``out_dir`` set, artifacts land in
    ``out_dir`` atomically.
    """
    from . import artifacts

    if config.n_obs < 2:
        raise InsufficientData(f"need at least 2 observations, got n_obs={config.n_obs}")
    observations = simulate(config)
    twin = train(config, observations, simulated=True)
    forecast = predict_future(twin, with_history=False)
    if out_dir is not None:
        artifacts.write_bundle(out_dir, twin, forecast)
    return twin, forecast


__all__ = [
    "FrequencyObservation", "Forecast", "QuantityFit", "QuantityForecast", "ResponseForecast",
    "TwinState", "coverage", "fit_baseline_gp", "fit_quantity", "ground_truth", "predict_future",
    "process", "quantity_seed", "rmse", "run_pipeline", "simulate", "train", "update",
]
