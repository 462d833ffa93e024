import numpy as np
import pytest

import kinetics
from dispersion import GaussianFormFactor, PhysicalParams, Polaron, Radiative, Tabulated
from errors import ConfigurationError, ModelInconsistencyError
from grid import DensityField, make_grid
from kinetics import (
    CollisionKernel,
    ReservoirSpec,
    apply_identification,
    delta_rate_integral,
    evaluate_form,
    linear_form,
    linear_rhs,
    nonlinear_rhs,
    rate_coefficients,
    rate_model,
    susceptibility,
    total_rate,
)

PARAMS = PhysicalParams(m=1.0, beta=1.0)
LIGHT = Radiative(c=1.0)


def _random_field(grid, seed):
    return DensityField(grid, np.random.default_rng(seed).random(grid.size))


def test_zero_field_is_stationary():
    grid = make_grid(1, 2.0, 32)
    n = DensityField.zeros(grid)
    reservoir = ReservoirSpec(beta=1.0, occupation=0.3, dispersion=LIGHT)
    assert np.all(linear_rhs(n, reservoir, PARAMS, sigma_E=0.3) == 0.0)
    assert np.all(nonlinear_rhs(n, LIGHT, PARAMS, sigma_E=0.3) == 0.0)


def test_state_without_resonant_partners_is_stationary():
    grid = make_grid(1, 2.0, 32)
    n = _random_field(grid, 7)
    gapped = ReservoirSpec(beta=1.0, occupation=0.2, dispersion=Polaron(50.0))
    kernel = CollisionKernel.for_reservoir(grid, gapped, PARAMS, sigma_E=0.05)
    # every pair, emission or absorption, is far off shell
    assert np.min(np.abs(kernel.energy_argument())) > 40.0
    assert np.all(linear_rhs(n, gapped, PARAMS, kernel=kernel) == 0.0)

    gapless = ReservoirSpec(beta=1.0, occupation=0.2, dispersion=LIGHT)
    assert np.max(np.abs(linear_rhs(n, gapless, PARAMS, sigma_E=0.3))) > 0.0


def test_identification_gives_quadratic_equation():
    grid = make_grid(1, 2.0, 32)
    reservoir = ReservoirSpec(beta=1.0, occupation=0.0, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.3)
    identified = apply_identification(linear_form(reservoir))

    for seed in range(100):
        n = _random_field(grid, seed)
        quadratic = nonlinear_rhs(n, LIGHT, PARAMS, kernel=kernel)
        substituted = evaluate_form(n, identified, kernel)
        scale = 1.0 + float(np.max(np.abs(kernel.master_terms(n.values, n.values)["gain"])))
        np.testing.assert_allclose(substituted, quadratic, rtol=0, atol=1e-12 * scale)


def test_identification_is_idempotent():
    reservoir = ReservoirSpec(beta=1.0, dispersion=LIGHT)
    once = apply_identification(linear_form(reservoir))
    assert apply_identification(once) == once
    assert apply_identification(once, retain_unit_occupation=True) == once
    assert once.label == "quadratic"
    assert linear_form(reservoir).label == "linear"


def test_retained_unit_occupation_differs_from_quadratic():
    grid = make_grid(1, 2.0, 32)
    reservoir = ReservoirSpec(beta=1.0, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.3)
    n = _random_field(grid, 0)
    retained = evaluate_form(n, apply_identification(linear_form(reservoir), True), kernel)
    assert not np.allclose(retained, nonlinear_rhs(n, LIGHT, PARAMS, kernel=kernel))
    assert abs(total_rate(retained, grid)) < 1e-10 * np.max(np.abs(retained))


@pytest.mark.parametrize("grid", [make_grid(1, 2.0, 32), make_grid(2, 2.0, 8), make_grid(3, 1.0, 4)])
def test_number_is_conserved(grid):
    n = _random_field(grid, 7)
    reservoir = ReservoirSpec(
        beta=2.0, occupation=lambda q: 0.1 * np.exp(-np.sum(q * q, axis=-1)), dispersion=LIGHT
    )
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.4)

    quadratic = nonlinear_rhs(n, LIGHT, PARAMS, kernel=kernel)
    assert abs(total_rate(quadratic, grid)) <= 1e-10 * max(1.0, np.max(np.abs(quadratic)))
    linear = linear_rhs(n, reservoir, PARAMS, kernel=kernel)
    assert abs(total_rate(linear, grid)) <= 1e-10 * max(1.0, np.max(np.abs(linear)))


def test_single_cell_loses_number():
    grid = make_grid(1, 4.0, 32)
    i0 = 16
    assert grid.nodes[i0, 0] == pytest.approx(0.125)
    values = np.zeros(grid.size)
    values[i0] = 1.0
    n = DensityField(grid, values)
    reservoir = ReservoirSpec(beta=1.0, dispersion=LIGHT)
    rhs = linear_rhs(n, reservoir, PARAMS, sigma_E=0.1)
    assert rhs[i0] < 0
    assert np.all(np.delete(rhs, i0) >= 0)


def test_two_cell_resonance():
    grid = make_grid(1, 4.0, 16)
    i0, i1 = 8, 11
    assert grid.nodes[i0, 0] == pytest.approx(0.25)
    assert grid.nodes[i1, 0] == pytest.approx(1.75)
    values = np.zeros(grid.size)
    values[[i0, i1]] = 1.0
    rhs = nonlinear_rhs(DensityField(grid, values), LIGHT, PARAMS, sigma_E=0.1)

    assert rhs[i0] > 0
    assert rhs[i1] < 0
    assert rhs[i0] == pytest.approx(-rhs[i1], rel=1e-12)
    assert np.all(np.delete(rhs, [i0, i1]) == 0.0)


def test_empty_cells_never_go_negative():
    grid = make_grid(2, 2.0, 8)
    values = np.random.default_rng(4).random(grid.size)
    values[::3] = 0.0
    n = DensityField(grid, values)
    reservoir = ReservoirSpec(beta=1.0, occupation=0.2, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.5)

    assert np.all(linear_rhs(n, reservoir, PARAMS, kernel=kernel)[::3] >= 0)
    assert np.all(nonlinear_rhs(n, LIGHT, PARAMS, kernel=kernel)[::3] == 0.0)


def test_zero_temperature_has_no_absorption():
    grid = make_grid(1, 2.0, 16)
    n = _random_field(grid, 1)
    reservoir = ReservoirSpec(beta=np.inf, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.3)
    A = kernel.weights
    assert np.all(kernel.thermal == 0.0)

    expected = A.T @ n.values - n.values * A.sum(axis=1)
    np.testing.assert_allclose(linear_rhs(n, reservoir, PARAMS, kernel=kernel), expected, atol=1e-13)
    assert np.all(rate_coefficients(n, reservoir, kernel)["absorption_loss"] == 0.0)


def test_blocked_kernel_matches_dense(monkeypatch):
    monkeypatch.setattr(kinetics, "PANEL_ELEMENTS", 640)
    grid = make_grid(2, 2.0, 8)
    params = PhysicalParams(m=1.0, beta=1.0, f=GaussianFormFactor(1.0, 1.5))
    dense = CollisionKernel(grid, LIGHT, params, sigma_E=0.5, beta=1.0, precompute=True)
    blocked = CollisionKernel(grid, LIGHT, params, sigma_E=0.5, beta=1.0, precompute=False, workers=2)
    assert blocked.block == 10

    n = _random_field(grid, 9)
    occ = np.random.default_rng(10).random(grid.size) + 1.0
    np.testing.assert_allclose(blocked.weights, dense.weights, rtol=1e-13)
    np.testing.assert_allclose(blocked.quadratic_rhs(n.values), dense.quadratic_rhs(n.values), rtol=1e-10, atol=1e-12)
    dense_terms = dense.master_terms(n.values, occ)
    for name, values in blocked.master_terms(n.values, occ).items():
        np.testing.assert_allclose(values, dense_terms[name], rtol=1e-10, atol=1e-12)


def test_kernel_validation():
    grid = make_grid(1, 2.0, 8)
    with pytest.raises(ConfigurationError):
        CollisionKernel(grid, LIGHT, PARAMS, sigma_E=0.0)
    with pytest.raises(ConfigurationError):
        ReservoirSpec(beta=1.0, rate_dispersion="dressed")
    with pytest.raises(ConfigurationError):
        ReservoirSpec(beta=1.0, occupation=np.ones(3)).occupation_on(grid)

    flat = Tabulated(np.array([0.0, 10.0]), np.array([0.0, 0.0]))
    with pytest.raises(ModelInconsistencyError):
        CollisionKernel(grid, flat, PARAMS, sigma_E=0.1, beta=1.0)

    other = make_grid(1, 2.0, 16)
    kernel = CollisionKernel(grid, LIGHT, PARAMS, sigma_E=0.1, beta=1.0)
    with pytest.raises(ConfigurationError):
        evaluate_form(DensityField.zeros(other), linear_form(ReservoirSpec(beta=1.0)), kernel)


def test_bare_rate_dispersion():
    reservoir = ReservoirSpec(beta=1.0, dispersion=LIGHT, rate_dispersion="bare")
    assert rate_model(reservoir, PhysicalParams(m=2.0)).m == 2.0
    assert rate_model(ReservoirSpec(beta=1.0, dispersion=LIGHT), PARAMS) is LIGHT


def test_susceptibility_matches_delta_rates():
    grid = make_grid(1, 2.0, 64)
    n = _random_field(grid, 3)
    reservoir = ReservoirSpec(beta=1.0, occupation=0.5, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.2)
    s = susceptibility(n, reservoir, kernel, epsilon_reg=0.05)

    rates = delta_rate_integral(n, reservoir, kernel)
    np.testing.assert_allclose(s.minus.imag, np.pi * rates, rtol=1e-3)
    np.testing.assert_allclose(s.coupling_minus.real, s.minus.imag)


def test_susceptibility_without_thermal_excitations():
    grid = make_grid(1, 4.0, 32)
    i0 = 16
    values = np.zeros(grid.size)
    values[i0] = 1.0
    n = DensityField(grid, values)
    reservoir = ReservoirSpec(beta=np.inf, dispersion=LIGHT)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.1)
    s = susceptibility(n, reservoir, kernel, epsilon_reg=0.05)

    assert np.all(s.plus == 0.0)
    rhs = linear_rhs(n, reservoir, PARAMS, kernel=kernel)
    assert rhs[i0] == pytest.approx(-2.0 * s.minus[i0].imag, rel=1e-12)


def test_off_shell_susceptibility_is_real():
    grid = make_grid(1, 1.0, 16)
    n = _random_field(grid, 2)
    reservoir = ReservoirSpec(beta=1.0, dispersion=Polaron(5.0))
    kernel = CollisionKernel.for_reservoir(grid, reservoir, PARAMS, sigma_E=0.05)
    s = susceptibility(n, reservoir, kernel, epsilon_reg=0.05)
    assert np.all(np.abs(s.minus.imag) <= 1e-12 * np.abs(s.minus.real))
    assert np.all(s.minus.real > 0)


def test_lorentzian_and_gaussian_absorptive_parts_agree():
    grid = make_grid(1, 8.0, 4096)
    params = PhysicalParams(m=1.0, beta=1.0, f=GaussianFormFactor(1.0, 2.0))
    reservoir = ReservoirSpec(beta=1.0, dispersion=Polaron(1.0))
    kernel = CollisionKernel.for_reservoir(grid, reservoir, params, sigma_E=0.01)
    n = DensityField(grid, np.ones(grid.size))
    i = int(np.argmin(np.abs(grid.nodes[:, 0] - 2.0)))

    gaussian = susceptibility(n, reservoir, kernel, epsilon_reg=0.01)
    lorentzian = susceptibility(n, reservoir, kernel, epsilon_reg=0.01, prescription="lorentzian")
    assert lorentzian.minus[i].imag == pytest.approx(gaussian.minus[i].imag, rel=0.1)
    with pytest.raises(ConfigurationError):
        susceptibility(n, reservoir, kernel, epsilon_reg=0.01, prescription="cauchy")
