import pytest

from sdof_twin.config import from_dict
from sdof_twin.sdof_core import NominalModel


@pytest.fixture
def nominal():
    return NominalModel.normalized(0.05)


@pytest.fixture
def quick_config():
    """Small sampler settings so end-to-end tests run in seconds."""
    def make(**kw):
        tree = {"smc": {"n_particles": 120, "n_steps": 12, "n_mh_moves": 2},
                "em": {"max_iters": 3}, "experts": 2,
                "prediction": {"grid_step": 50.0}}
        for k, v in kw.items():
            if isinstance(v, dict):
                tree.setdefault(k, {}).update(v)
            else:
                tree[k] = v
        return from_dict(tree)
    return make
