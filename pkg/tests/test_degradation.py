import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdof_twin.config import from_dict
from sdof_twin.degradation import (
    MassDegradationParams,
    generate_dataset,
    mass_delta,
    mass_fast,
    mass_slow,
    observe_frequency,
    sawtooth,
    simulate_observations,
    stiffness_delta,
)
from sdof_twin.errors import InsufficientData
from sdof_twin.sdof_core import modal_state


def test_stiffness_starts_at_zero():
    assert stiffness_delta(0.0) == pytest.approx(0.0, abs=1e-15)


def test_stiffness_tends_to_total_loss():
    assert stiffness_delta(1e6) == pytest.approx(-1.0, abs=1e-12)


def test_stiffness_golden_t100():
    # 50-digit mpmath evaluation
    assert stiffness_delta(100.0) == pytest.approx(-0.061340282286774058921, abs=1e-14)


def test_stiffness_vectorized():
    t = np.linspace(0, 1000, 11)
    np.testing.assert_array_equal(stiffness_delta(t), [stiffness_delta(x) for x in t])


def test_sawtooth_range_and_period():
    x = np.linspace(-20, 20, 4001)
    s = sawtooth(x)
    assert s.min() >= -1 and s.max() < 1
    np.testing.assert_allclose(sawtooth(x + 2 * math.pi), s, atol=1e-12)


def test_mass_fast_only_outside_steps():
    p = MassDegradationParams()
    for t in (50.0, 150.0, 850.0, 950.0):
        assert mass_slow(t, p) == 0.0
        assert mass_delta(t, p) == mass_fast(t, p)


def test_mass_zero_crossing_outside_steps():
    p = MassDegradationParams()
    # sawtooth crosses zero where beta*(t - pi/beta) is an odd multiple of pi
    t = 2 * math.pi / p.beta * 2
    assert mass_delta(t, p) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 2000.0))
def test_mass_fast_amplitude_bound(t):
    assert abs(mass_fast(t)) <= 0.25


@settings(max_examples=200, deadline=None)
@given(st.floats(200.0, 400.0 - 2 * math.pi / 0.15 - 1e-6))
def test_mass_fast_periodicity_within_step(t):
    p = MassDegradationParams()
    t2 = t + 2 * math.pi / p.beta
    a = mass_delta(t, p) - mass_slow(t, p)
    b = mass_delta(t2, p) - mass_slow(t2, p)
    assert a == pytest.approx(b, abs=1e-12)


def test_mass_step_levels():
    assert [mass_slow(t) for t in (199.0, 200.0, 450.0, 700.0, 800.0)] == [0, 1, 2, 3, 0]


def test_exact_observation_without_noise(nominal):
    s = modal_state(nominal, 0.2, -0.1)
    obs = observe_frequency(nominal, 0.2, -0.1, 0.0)
    assert obs.omega_ds == s.omega_d


def test_fixed_seed_reproduces(nominal):
    a = observe_frequency(nominal, 0.0, -0.1, 0.01, rng_seed=(3, 4))
    b = observe_frequency(nominal, 0.0, -0.1, 0.01, rng_seed=(3, 4))
    assert a == b


def test_noise_mean_clt(nominal):
    # 10k draws: sample mean within 3 standard errors of the noiseless value
    truth = modal_state(nominal, 0.0, -0.2).omega_d
    sigma0 = 0.005
    draws = np.array([observe_frequency(nominal, 0.0, -0.2, sigma0, rng_seed=(11, i)).omega_ds
                      for i in range(10_000)])
    assert abs(draws.mean() - truth) <= 3 * sigma0 * truth / math.sqrt(10_000)
    assert draws.std() == pytest.approx(sigma0 * truth, rel=0.05)


def test_stiffness_dataset_shape():
    cfg = from_dict({"case": "stiffness", "tau": 150.0, "n_obs": 35, "sigma0": 0.005})
    obs = generate_dataset(cfg)
    assert len(obs) == 35
    np.testing.assert_allclose(np.diff([o.t_s for o in obs]), 150 / 34, atol=1e-12)


def test_mass_dataset_size():
    cfg = from_dict({"case": "mass", "tau": 550.0, "n_obs": 175, "sigma0": 0.005})
    assert len(generate_dataset(cfg)) == 175


@pytest.mark.parametrize("case", ["stiffness", "mass", "joint"])
def test_clean_dataset_reproduces_modal_state(case, nominal):
    cfg = from_dict({"case": case, "tau": 500.0, "n_obs": 20, "sigma0": 0.0})
    for o in generate_dataset(cfg):
        dm = mass_delta(o.t_s) if case != "stiffness" else 0.0
        dk = stiffness_delta(o.t_s) if case != "mass" else 0.0
        s = modal_state(nominal, dm, dk)
        assert o.omega_ds == s.omega_d
        if case == "joint":
            assert o.lambda_re == s.lambda_re


def test_single_observation_rejected():
    with pytest.raises(InsufficientData):
        generate_dataset(from_dict({"n_obs": 1}))


def test_index_offset_continues_noise_streams(nominal):
    t = np.linspace(0, 100, 10)
    full = simulate_observations(nominal, "stiffness", t, 0.01, seed=5)
    tail = simulate_observations(nominal, "stiffness", t[6:], 0.01, seed=5, index_offset=6)
    assert full[6:] == tail
