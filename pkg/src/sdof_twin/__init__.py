"""Digital twin for a single-degree-of-freedom oscillator with multi-timescale degradation."""
from .config import ScenarioConfig, load_config
from .degradation import FrequencyObservation, generate_dataset, mass_delta, stiffness_delta
from .em import EmConfig, fit
from .inversion import invert_mass, invert_mass_stiffness, invert_stiffness, process_dataset
from .moe_gp import MixingCoefficients, MoEGPModel, posterior_predictive
from .sdof_core import NominalModel, free_response, modal_state
from .smc import SmcConfig, run_smc
from .twin import TwinState, predict_future, run_pipeline, update

__version__ = "0.1.0"
