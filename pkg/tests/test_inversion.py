import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdof_twin.degradation import FrequencyObservation, observe_frequency
from sdof_twin.errors import AllObservationsRejected, UndampedAmbiguity
from sdof_twin.inversion import (
    invert_mass,
    invert_mass_stiffness,
    invert_stiffness,
    two_distance_dk,
    process_dataset,
)
from sdof_twin.sdof_core import NominalModel, modal_state, nominal_from_physical


def _obs(model, dm, dk, t=0.0):
    s = modal_state(model, dm, dk)
    return FrequencyObservation(t_s=t, omega_ds=s.omega_d, lambda_re=s.lambda_re, sigma0=0.0)


def test_no_shift_means_no_stiffness_change(nominal):
    obs = FrequencyObservation(0.0, nominal.omega_d0, None, 0.0)
    est = invert_stiffness(obs, nominal)
    assert est.diagnostics.d1_tilde == 0.0 and est.dk_hat == 0.0


def test_undamped_stiffness_closed_form():
    m = nominal_from_physical(1.0, 0.0, 4.0)
    est = invert_stiffness(FrequencyObservation(0.0, 0.9 * m.omega0, None, 0.0), m)
    assert est.diagnostics.d1_tilde == pytest.approx(0.1, abs=1e-15)
    assert est.dk_hat == pytest.approx(-0.19, abs=1e-15)


def test_undamped_stiffness_identity_on_grid():
    m = nominal_from_physical(1.0, 0.0, 4.0)
    for w in np.linspace(0.1, 3.0, 50):
        est = invert_stiffness(FrequencyObservation(0.0, w, None, 0.0), m)
        assert est.dk_hat == pytest.approx((w / m.omega0) ** 2 - 1, abs=1e-14)


def test_undamped_mass_zero_distance():
    m = nominal_from_physical(1.0, 0.0, 4.0)
    assert invert_mass(FrequencyObservation(0.0, m.omega0, None, 0.0), m).dm_hat == 0.0


def test_undamped_mass_hand_value():
    m = nominal_from_physical(1.0, 0.0, 4.0)
    est = invert_mass(FrequencyObservation(0.0, m.omega0 / 2, None, 0.0), m)
    assert est.diagnostics.d2_tilde == 0.5
    assert est.dm_hat == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_stiffness_round_trip(nominal, seed):
    rng = np.random.default_rng(seed)
    for dk in rng.uniform(-0.9, 0.5, 100):
        assert abs(invert_stiffness(_obs(nominal, 0.0, dk), nominal).dk_hat - dk) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_mass_round_trip(nominal, seed):
    rng = np.random.default_rng(seed)
    for dm in rng.uniform(-0.5, 3.0, 100):
        assert abs(invert_mass(_obs(nominal, dm, 0.0), nominal).dm_hat - dm) <= 1e-8


def test_joint_nominal_is_zero(nominal):
    obs = FrequencyObservation(0.0, nominal.omega_d0, nominal.lambda_re0, 0.0)
    est = invert_mass_stiffness(obs, nominal)
    assert est.dm_hat == pytest.approx(0.0, abs=1e-15)
    assert est.dk_hat == pytest.approx(0.0, abs=1e-15)


def test_joint_round_trip_fixed_point(nominal):
    est = invert_mass_stiffness(_obs(nominal, 0.5, -0.3), nominal)
    assert est.dm_hat == pytest.approx(0.5, abs=1e-8)
    assert est.dk_hat == pytest.approx(-0.3, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.011, 0.2), st.floats(-0.5, 3.0), st.floats(-0.89, 0.5))
def test_joint_round_trip_property(zeta0, dm, dk):
    m = NominalModel.normalized(zeta0)
    try:
        obs = _obs(m, dm, dk)
    except Exception:
        return  # overdamped corner of the domain has no damped frequency
    est = invert_mass_stiffness(obs, m)
    assert abs(est.dm_hat - dm) <= 1e-8 and abs(est.dk_hat - dk) <= 1e-8


def test_joint_requires_damping():
    m = nominal_from_physical(1.0, 0.0, 4.0)
    with pytest.raises(UndampedAmbiguity):
        invert_mass_stiffness(FrequencyObservation(0.0, 2.0, -0.1, 0.0), m)


def test_two_distance_form_is_reachable(nominal):
    obs = _obs(nominal, 0.0, 0.0)
    est = invert_mass_stiffness(obs, nominal, use_two_distance_dk=True)
    assert est.dk_hat == pytest.approx(two_distance_dk(0.0, 0.0, nominal.zeta0), abs=1e-15)


@pytest.mark.parametrize("case", ["stiffness", "mass", "joint"])
def test_clean_dataset_round_trip(nominal, case):
    t = np.linspace(0, 700, 30)
    dms = np.where(case == "stiffness", 0.0, np.linspace(0.0, 2.0, 30))
    dks = np.where(case == "mass", 0.0, np.linspace(0.0, -0.6, 30))
    obs = [_obs(nominal, a, b, ts) for a, b, ts in zip(dms, dks, t)]
    res = process_dataset(obs, nominal, case)
    assert not res.rejected
    if case != "mass":
        np.testing.assert_allclose(res.series("dk")[1], dks, atol=1e-8)
    if case != "stiffness":
        np.testing.assert_allclose(res.series("dm")[1], dms, atol=1e-8)


def test_empty_dataset(nominal):
    with pytest.raises(AllObservationsRejected):
        process_dataset([], nominal, "stiffness")


def test_bad_row_rejected_others_kept(nominal):
    obs = [_obs(nominal, 0.0, -0.1, 0.0), FrequencyObservation(1.0, -2.0, None, 0.0),
           _obs(nominal, 0.0, -0.2, 2.0)]
    res = process_dataset(obs, nominal, "stiffness")
    assert len(res) == 2
    assert [r.t_s for r in res.rejected] == [1.0]
    assert [row[3] for row in res.rows()] == [False, True, False]


def test_inversion_error_shrinks_with_noise(nominal):
    dk = -0.2
    errs = []
    for sigma0 in (0.02, 0.01, 0.005, 0.0025):
        e = [invert_stiffness(observe_frequency(nominal, 0.0, dk, sigma0, rng_seed=(7, i)), nominal).dk_hat - dk
             for i in range(300)]
        errs.append(math.sqrt(np.mean(np.square(e))))
    assert all(b < a for a, b in zip(errs, errs[1:]))
