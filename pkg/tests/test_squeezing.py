import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multimode_opo.squeezing import (
    DIVERGENCE_LIMIT,
    EfficiencyChain,
    OpoDynamics,
    calibrate_to_measurement,
    min_variance_paper,
    squeezing_spectrum,
    to_decibels,
    variance_spectrum,
)

LOSSLESS = EfficiencyChain()


def transfer_function_variance(sigma, x, eta, sign):
    # single-mode Langevin equation dX/dt = -gamma (1 -+ sigma) X + sqrt(2 gamma) X_in,
    # output X_out = sqrt(2 gamma) X - X_in, then a beam splitter of transmission eta
    h = 2.0 / ((1.0 + sign * sigma) + 1j * x) - 1.0
    return eta * abs(h) ** 2 + (1.0 - eta)


@pytest.mark.parametrize("gains, k, expected", [([1.0, 1.0], 1, 0.0), ([1.0, 0.0], 1, 1.0), ([1.0, 0.5], 1, 1 / 3)])
def test_figure_of_merit_examples(gains, k, expected):
    assert min_variance_paper(gains, k) == pytest.approx(expected, abs=1e-15)


def test_threshold_limit():
    vm, vp = variance_spectrum(OpoDynamics(1.0, 1.0, [1.0]), LOSSLESS, 0, 0.0)
    assert vm == 0.0
    assert vp > DIVERGENCE_LIMIT
    spec = squeezing_spectrum(OpoDynamics(1.0, 1.0, [1.0]), LOSSLESS, [0.0])
    assert spec.divergent[0, 0]


def test_vacuum_without_pump():
    vm, vp = variance_spectrum(OpoDynamics(1.0, 0.0, [1.0]), LOSSLESS, 0, 3.0)
    assert (vm, vp) == (1.0, 1.0)


def test_half_threshold_at_one_linewidth():
    gamma = 2 * math.pi * 1e6
    vm, _ = variance_spectrum(OpoDynamics(gamma, 0.5, [1.0]), LOSSLESS, 0, gamma)
    assert vm == pytest.approx(1 - 2 / (1.5**2 + 1), abs=1e-15)
    assert vm == pytest.approx(0.3846, abs=1e-4)
    assert vm == pytest.approx(transfer_function_variance(0.5, 1.0, 1.0, +1), abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(sigma=st.floats(0.0, 0.999), x=st.floats(0.0, 20.0), eta=st.floats(0.01, 1.0))
def test_spectra_match_langevin_transfer_function(sigma, x, eta):
    dyn = OpoDynamics(1.0, sigma, [1.0])
    vm, vp = variance_spectrum(dyn, EfficiencyChain(escape=eta), 0, x)
    assert vm == pytest.approx(transfer_function_variance(sigma, x, eta, +1), rel=1e-12, abs=1e-14)
    assert vp == pytest.approx(transfer_function_variance(sigma, x, eta, -1), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(sigma=st.floats(0.0, 0.999), x=st.floats(0.0, 20.0))
def test_lossless_output_is_minimum_uncertainty(sigma, x):
    vm, vp = variance_spectrum(OpoDynamics(1.0, sigma, [1.0]), LOSSLESS, 0, x)
    assert vm * vp == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(gains=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30), r=st.floats(0.0, 1.0),
       x=st.floats(0.0, 10.0))
def test_weaker_modes_squeeze_less(gains, r, x):
    g = np.r_[1.0, np.sort(gains)[::-1]]
    spec = squeezing_spectrum(OpoDynamics(1.0, r, g), EfficiencyChain(escape=0.7), [x])
    assert np.all(np.diff(spec.v_minus[:, 0]) >= -1e-15)


@settings(max_examples=200, deadline=None)
@given(gains=st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=40))
def test_figure_of_merit_is_root_of_threshold_variance(gains):
    g = np.r_[1.0, np.sort(gains)[::-1]]
    dyn = OpoDynamics(1.0, 1.0, g)
    for k in range(1, g.size):
        vm, _ = variance_spectrum(dyn, LOSSLESS, k, 0.0)
        assert abs(math.sqrt(vm) - min_variance_paper(g, k)) < 1e-12


@pytest.mark.parametrize("v, db", [(1.0, 0.0), (0.759, -1.20), (0.933, -0.30)])
def test_decibels(v, db):
    assert to_decibels(v) == pytest.approx(db, abs=0.005)


def test_decibels_reject_nonpositive():
    with pytest.raises(ValueError):
        to_decibels(0.0)


def test_efficiency_chain():
    eff = EfficiencyChain(0.6, 0.95, 0.95, 0.95)
    assert eff.total == pytest.approx(0.6 * 0.95 * 0.95 * 0.95**2)
    with pytest.raises(ValueError):
        EfficiencyChain(escape=1.2)


def test_pump_ratio_is_validated():
    with pytest.raises(ValueError):
        OpoDynamics(1.0, 1.5, [1.0])
    with pytest.raises(ValueError):
        OpoDynamics(1.0, 0.5, [0.0])


def test_calibration_with_pinned_efficiency():
    gamma = math.pi * 4.68e6
    omega = 2 * math.pi * 3e6
    dyn = OpoDynamics(gamma, 0.5, [1.0, 0.84, 0.84])
    eff = EfficiencyChain(escape=0.55)
    cal = calibrate_to_measurement([1.0, 0.84, 0.84], dyn, eff, 0, -1.2, omega)
    assert 0 < cal.pump_ratio < 1
    vm, _ = variance_spectrum(dyn.with_pump_ratio(cal.pump_ratio), eff, 0, omega)
    assert to_decibels(vm) == pytest.approx(-1.2, abs=1e-9)


def test_calibration_of_efficiency():
    omega = 2 * math.pi * 3e6
    dyn = OpoDynamics(math.pi * 4.68e6, 0.8, [1.0])
    cal = calibrate_to_measurement([1.0], dyn, EfficiencyChain(0.9), 0, -1.2, omega, solve_for="efficiency")
    assert cal.pump_ratio == 0.8
    assert cal.achieved_db == pytest.approx(-1.2, abs=1e-9)
    assert 0 < cal.efficiency.propagation < 1


def test_calibration_to_shot_noise_gives_zero_pump():
    dyn = OpoDynamics(1.0, 0.5, [1.0])
    assert calibrate_to_measurement([1.0], dyn, LOSSLESS, 0, 0.0, 1.0).pump_ratio == 0.0


def test_calibration_beyond_lossless_bound_fails():
    dyn = OpoDynamics(1.0, 0.5, [1.0])
    # at Omega = gamma the best possible squeezing is V = 1/5, about -7 dB
    with pytest.raises(ValueError, match="lossless"):
        calibrate_to_measurement([1.0], dyn, LOSSLESS, 0, -7.5, 1.0)
    with pytest.raises(ValueError, match="unreachable"):
        calibrate_to_measurement([1.0], dyn, EfficiencyChain(escape=0.3), 0, -6.0, 1.0)
