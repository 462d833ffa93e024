import math

import numpy as np
import pytest

from dispersion import BogoliubovBulk, ConstantInteraction, Free, Polaron, Radiative, sound_speed
from errors import ConfigurationError
from landau import critical_velocity, instability_witness, log_k_grid, stability_margin


def test_stability_margin():
    margin = stability_margin((1.0, 0.0, 0.0), (0.5, 0.0, 0.0), Free(1.0), 1.0)
    assert margin == pytest.approx(-0.25)
    assert stability_margin((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), Free(1.0), 1.0) > 0


def test_radiative_below_light_speed_is_stable():
    for t in np.logspace(-3, 1, 40):
        assert stability_margin((0.5, 0.0, 0.0), (t, 0.0, 0.0), Radiative(1.0), 1.0) > 0


def test_radiative_critical_velocity():
    report = critical_velocity(Radiative(2.0), 1.0, log_k_grid())
    assert abs(report.v_c - 2.0) < 1e-6
    assert report.at_zero
    assert report.is_superfluid_at([1.5])
    assert not report.is_superfluid_at([2.5])


def test_free_gas_is_not_superfluid():
    k_grid = log_k_grid()
    report = critical_velocity(Free(1.0), 1.0, k_grid)
    assert report.v_c == pytest.approx(0.0, abs=1e-9)

    u = np.array([0.3, 0.0])
    witness = instability_witness(u, Free(1.0), 1.0, k_grid)
    assert witness is not None
    assert stability_margin(u, witness, Free(1.0), 1.0) < 0


def test_polaron_exact_infimum():
    report = critical_velocity(Polaron(2.0), 1.0, log_k_grid())
    assert report.v_c == pytest.approx(2.0, abs=1e-8)
    assert report.argmin_k == pytest.approx(2.0, abs=1e-4)
    assert not report.at_zero
    assert report.sufficient_bound == pytest.approx(math.sqrt(2.0))
    assert report.sufficient_bound < report.v_c
    assert "sufficient" in report.note


def test_subcritical_velocity_has_positive_margin():
    model = Polaron(2.0)
    k_grid = log_k_grid()
    report = critical_velocity(model, 1.0, k_grid)
    u = np.array([report.v_c * (1 - 1e-6), 0.0, 0.0])
    k_vecs = k_grid[:, None] * np.array([1.0, 0.0, 0.0])
    assert np.all(stability_margin(u, k_vecs, model, 1.0) > 0)
    assert instability_witness(u, model, 1.0, k_grid) is None


def test_bogoliubov_matches_sound_speed():
    model = BogoliubovBulk(m=1.0, gamma=1.0, g=ConstantInteraction(1.0))
    report = critical_velocity(model, 1.0, log_k_grid())
    assert report.v_c == pytest.approx(sound_speed(model), abs=1e-3)


def test_rotation_invariance():
    k_grid = log_k_grid(1e-3, 5.0, 200)
    along_axis = critical_velocity(Radiative(1.5), 1.0, k_grid, direction=[0.0, 1.0, 0.0])
    diagonal = critical_velocity(Radiative(1.5), 1.0, k_grid, direction=[1.0, 1.0, 1.0])
    assert along_axis.v_c == pytest.approx(diagonal.v_c, rel=1e-12)


def test_empty_grid():
    with pytest.raises(ConfigurationError):
        critical_velocity(Radiative(1.0), 1.0, [])
    with pytest.raises(ConfigurationError):
        log_k_grid(1.0, 0.5)
