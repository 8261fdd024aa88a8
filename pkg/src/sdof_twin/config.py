"""Scenario configuration: TOML loading, dotted overrides, canonical digest."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .degradation import CASES, MassDegradationParams, StiffnessDegradationParams
from .em import EmConfig
from .errors import ConfigError
from .sdof_core import NominalModel
from .smc import SmcConfig, power_schedule

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class NominalSettings:
    m0: float = 1.0
    k0: float = _TWO_PI**2
    c0: float = 0.1 * _TWO_PI  # damping ratio 0.05 for the defaults above


@dataclass(frozen=True)
class StiffnessSettings:
    alpha_slow: float = 0.4e-3
    eps_slow: float = 0.005
    beta_slow: float = 7e-2
    alpha_fast: float = 0.8e-3
    eps_fast: float = 0.01
    beta_fast: float = 2e-1


@dataclass(frozen=True)
class MassSettings:
    beta: float = 0.15
    eps: float = 0.25
    t1: float = 200.0
    t2: float = 400.0
    t3: float = 600.0
    t4: float = 800.0


@dataclass(frozen=True)
class SmcSettings:
    n_particles: int = 1000
    n_steps: int = 50
    ess_threshold: float = 0.85
    proposal_scale: float = 1.0
    n_mh_moves: int = 5
    anneal_exponent: float = 1.0


@dataclass(frozen=True)
class EmSettings:
    epsilon: float = 1e-3
    max_iters: int = 20
    prune_tol: float = 1e-6
    m_step_maxiter: int = 200


@dataclass(frozen=True)
class PredictionSettings:
    grid_start: float = 0.0
    grid_stop: float = 1000.0
    grid_step: float = 5.0
    u_init: float = 1.0
    v_init: float = 0.0
    response_periods: float = 5.0
    response_points: int = 100


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    case: str = "stiffness"
    tau: float = 150.0
    n_obs: int = 35
    sigma0: float = 0.005
    seed: int = 0
    experts: int = 4
    baseline: bool = True
    nominal: NominalSettings = field(default_factory=NominalSettings)
    stiffness: StiffnessSettings = field(default_factory=StiffnessSettings)
    mass: MassSettings = field(default_factory=MassSettings)
    smc: SmcSettings = field(default_factory=SmcSettings)
    em: EmSettings = field(default_factory=EmSettings)
    prediction: PredictionSettings = field(default_factory=PredictionSettings)

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.sigma0 < 0:
            raise ConfigError(f"sigma0 must be non-negative, got {self.sigma0}")
        if self.experts < 1:
            raise ConfigError("experts must be >= 1")
        p = self.prediction
        if not p.grid_step > 0 or p.grid_stop < p.grid_start:
            raise ConfigError("prediction grid needs grid_step > 0 and grid_stop >= grid_start")

    # -- derived objects ---------------------------------------------------
    def nominal_model(self) -> NominalModel:
        n = self.nominal
        return NominalModel(m0=n.m0, c0=n.c0, k0=n.k0)

    @property
    def stiffness_params(self) -> StiffnessDegradationParams:
        return StiffnessDegradationParams(**asdict(self.stiffness))

    @property
    def mass_params(self) -> MassDegradationParams:
        m = self.mass
        steps = ((m.t1, m.t2, 1.0), (m.t2, m.t3, 2.0), (m.t3, m.t4, 3.0))
        return MassDegradationParams(beta=m.beta, eps=m.eps, steps=steps)

    def smc_config(self, seed: int) -> SmcConfig:
        s = self.smc
        schedule = None if s.anneal_exponent == 1.0 else power_schedule(s.n_steps, s.anneal_exponent)
        return SmcConfig(
            n_particles=s.n_particles, n_steps=s.n_steps, ess_threshold=s.ess_threshold,
            proposal_scale=s.proposal_scale, anneal_schedule=schedule,
            n_mh_moves=s.n_mh_moves, seed=seed,
        )

    def em_config(self, n_experts: int, seed: int) -> EmConfig:
        e = self.em
        return EmConfig(
            n_experts=n_experts, epsilon=e.epsilon, max_iters=e.max_iters,
            smc=self.smc_config(seed), m_step_maxiter=e.m_step_maxiter, prune_tol=e.prune_tol,
        )

    def grid(self):
        import numpy as np

        p = self.prediction
        n = int(round((p.grid_stop - p.grid_start) / p.grid_step)) + 1
        return p.grid_start + p.grid_step * np.arange(n)

    def quantities(self) -> tuple:
        return {"stiffness": ("dk",), "mass": ("dm",), "joint": ("dm", "dk")}[self.case]

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_digest(self.to_dict())


def config_digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- key documentation (drives --help and validation) ----------------------
KEY_DOCS = {
    "name": ("-", "scenario label used for artifact directories"),
    "case": ("-", "degradation case: stiffness | mass | joint"),
    "tau": ("T0", "end of the observation window [0, tau]"),
    "n_obs": ("count", "equally spaced observations over [0, tau]"),
    "sigma0": ("relative", "std of multiplicative Gaussian noise on sensed frequencies"),
    "seed": ("-", "master seed for sensing noise and sampling"),
    "experts": ("count", "number of GP experts in the mixture"),
    "baseline": ("-", "also fit the single-GP baseline"),
    "nominal.m0": ("mass", "nominal mass"),
    "nominal.k0": ("force/length", "nominal stiffness"),
    "nominal.c0": ("force*time/length", "nominal damping coefficient"),
    "stiffness.alpha_slow": ("1/T0", "slow stiffness decay rate"),
    "stiffness.eps_slow": ("-", "slow modulation amplitude"),
    "stiffness.beta_slow": ("rad/T0", "slow modulation frequency"),
    "stiffness.alpha_fast": ("1/T0", "fast stiffness decay rate"),
    "stiffness.eps_fast": ("-", "fast modulation amplitude"),
    "stiffness.beta_fast": ("rad/T0", "fast modulation frequency"),
    "mass.beta": ("rad/T0", "sawtooth frequency of the fast mass term"),
    "mass.eps": ("-", "sawtooth amplitude of the fast mass term"),
    "mass.t1": ("T0", "start of mass level 1"),
    "mass.t2": ("T0", "start of mass level 2"),
    "mass.t3": ("T0", "start of mass level 3"),
    "mass.t4": ("T0", "end of mass level 3"),
    "smc.n_particles": ("count", "SMC particles"),
    "smc.n_steps": ("count", "annealing steps"),
    "smc.ess_threshold": ("fraction", "resample when ESS < threshold * n_particles"),
    "smc.proposal_scale": ("-", "multiplier on the 2.38^2/d random-walk scaling"),
    "smc.n_mh_moves": ("count", "Metropolis-Hastings moves per particle per step"),
    "smc.anneal_exponent": ("-", "schedule gamma_t = (t/n)^exponent; 1 is linear"),
    "em.epsilon": ("-", "stop when ||pi - pi_prev||_2 <= epsilon"),
    "em.max_iters": ("count", "maximum EM iterations"),
    "em.prune_tol": ("-", "mixing coefficients below this are set to exactly 0"),
    "em.m_step_maxiter": ("count", "quasi-Newton iterations per M-step"),
    "prediction.grid_start": ("T0", "first prediction time"),
    "prediction.grid_stop": ("T0", "last prediction time (inclusive)"),
    "prediction.grid_step": ("T0", "prediction grid spacing"),
    "prediction.u_init": ("length", "initial displacement for response prediction"),
    "prediction.v_init": ("length/time", "initial velocity for response prediction"),
    "prediction.response_periods": ("periods", "free-response window in nominal periods"),
    "prediction.response_points": ("count", "samples in each free-response history"),
}


def iter_keys(cfg=None, prefix=""):
    """Yield ``(dotted_key, default_value)`` for every leaf of the config tree."""
    cfg = cfg if cfg is not None else ScenarioConfig()
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        key = f"{prefix}{f.name}"
        if is_dataclass(value):
            yield from iter_keys(value, key + ".")
        else:
            yield key, value


def describe_keys() -> str:
    lines = ["configuration keys (key [unit] default: description):"]
    for key, default in iter_keys():
        unit, doc = KEY_DOCS[key]
        lines.append(f"  {key} [{unit}] {default!r}: {doc}")
    return "\n".join(lines)


def _coerce(value, target, key):
    kind = type(target)
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported type {kind.__name__}")


def _apply(cfg, tree: dict, prefix=""):
    names = {f.name for f in fields(cfg)}
    changes = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if k not in names:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(cfg, k)
        if is_dataclass(current):
            if not isinstance(v, dict):
                raise ConfigError(f"{key}: expected a table")
            changes[k] = _apply(current, v, key + ".")
        else:
            changes[k] = _coerce(v, current, key)
    try:
        return replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(tree: dict, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    return _apply(base or ScenarioConfig(), tree)


def parse_override(text: str) -> dict:
    """``"em.max_iters=1"`` -> ``{"em": {"max_iters": 1}}``; values use TOML syntax."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    tree: dict = {}
    node = tree
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return tree


def load_config(path=None, overrides=()) -> ScenarioConfig:
    cfg = ScenarioConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            tree = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg = from_dict(tree, cfg)
    for text in overrides:
        cfg = from_dict(parse_override(text), cfg)
    return cfg
