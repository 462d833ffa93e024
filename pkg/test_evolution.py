import os

import numpy as np
import pytest

from dispersion import PhysicalParams, Radiative
from errors import ConfigurationError, DivergenceError, StepSizeError
from evolution import EvolutionConfig, SnapshotLog, Trajectory, evolve, step
from grid import DensityField, integrate, make_grid
from kinetics import ReservoirSpec
from snapshot_store import SnapshotStore, load_trajectory

PARAMS = PhysicalParams(m=1.0, beta=1.0)
LIGHT = Radiative(c=1.0)


def _interior_state(grid, amplitude=0.5):
    q = grid.nodes[:, 0]
    values = amplitude * np.exp(-0.5 * ((q - 1.5) / 0.3) ** 2)
    return DensityField(grid, np.where(np.abs(q - 1.5) <= 0.9, values, 0.0))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        EvolutionConfig(sigma_E=0.0)
    with pytest.raises(ConfigurationError):
        EvolutionConfig(mode="implicit")
    with pytest.raises(ConfigurationError):
        EvolutionConfig(record_every=0)
    assert EvolutionConfig(dt=0.1, t_end=1.0).steps == 10
    assert EvolutionConfig(dt=0.3, t_end=1.0).steps == 4
    assert EvolutionConfig(t_end=0.0).steps == 0


def test_single_cell_is_a_fixed_point():
    grid = make_grid(1, 2.0, 16)
    values = np.zeros(grid.size)
    values[5] = 2.0
    n0 = DensityField(grid, values)
    trajectory = evolve(n0, EvolutionConfig(dt=0.1, t_end=1.0, sigma_E=0.3), LIGHT, PARAMS)

    assert trajectory.times == pytest.approx([0.1 * i for i in range(11)])
    assert trajectory.times[-1] == 1.0
    for snapshot in trajectory.snapshots:
        np.testing.assert_array_equal(snapshot.values, values)
    assert all(log.max_residual == 0.0 for log in trajectory.logs)


def test_recording_schedule():
    grid = make_grid(1, 2.0, 16)
    n0 = DensityField(grid, np.full(grid.size, 0.1))
    config = EvolutionConfig(dt=0.1, t_end=1.0, sigma_E=0.3, record_every=3)
    trajectory = evolve(n0, config, LIGHT, PARAMS)
    assert trajectory.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])

    shortened = evolve(n0, EvolutionConfig(dt=0.3, t_end=1.0, sigma_E=0.3), LIGHT, PARAMS)
    assert shortened.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])


def test_nonlinear_evolution_conserves_number():
    grid = make_grid(1, 4.0, 256)
    n0 = _interior_state(grid)
    config = EvolutionConfig(dt=0.04, t_end=1.0, sigma_E=0.05, record_every=5)
    trajectory = evolve(n0, config, LIGHT, PARAMS)

    assert trajectory.relative_drift() < 1e-4
    assert all(log.positive for log in trajectory.logs)
    assert np.max(np.abs(trajectory.final.values - n0.values)) > 1e-6


def test_fourth_order_self_convergence():
    grid = make_grid(1, 4.0, 256)
    n0 = _interior_state(grid)
    finals = []
    for dt in (0.04, 0.02, 0.01):
        config = EvolutionConfig(dt=dt, t_end=1.0, sigma_E=0.05, record_every=1000)
        finals.append(evolve(n0, config, LIGHT, PARAMS).final.values)

    coarse = np.max(np.abs(finals[0] - finals[1]))
    fine = np.max(np.abs(finals[1] - finals[2]))
    assert fine > 0
    assert coarse / fine >= 12.0


@pytest.mark.parametrize("retain", [False, True])
def test_reservoir_forms_conserve_number(retain):
    grid = make_grid(1, 4.0, 64)
    n0 = _interior_state(grid)
    mode = "nonlinear" if retain else "linear"
    config = EvolutionConfig(
        dt=0.005, t_end=0.1, sigma_E=0.2, mode=mode, retain_unit_occupation=retain
    )
    reservoir = ReservoirSpec(beta=1.0, occupation=0.0, dispersion=LIGHT)
    trajectory = evolve(n0, config, LIGHT, PARAMS, reservoir=reservoir)
    assert trajectory.relative_drift() < 1e-10
    assert all(log.clipped_mass == 0.0 for log in trajectory.logs)


def test_divergence_keeps_last_good_state():
    grid = make_grid(1, 1.0, 4)
    n0 = DensityField(grid, np.full(grid.size, 0.1))
    config = EvolutionConfig(dt=0.1, t_end=1.0)
    with pytest.raises(DivergenceError) as excinfo:
        evolve(n0, config, LIGHT, PARAMS, rhs=lambda v: np.full_like(v, np.nan))
    trajectory = excinfo.value.trajectory
    assert trajectory.times == [0.0]
    np.testing.assert_array_equal(trajectory.final.values, n0.values)


def test_step_size_error_on_large_clipping():
    grid = make_grid(1, 1.0, 4)
    n0 = DensityField(grid, np.full(grid.size, 0.1))
    with pytest.raises(StepSizeError) as excinfo:
        evolve(n0, EvolutionConfig(dt=0.1, t_end=1.0), LIGHT, PARAMS, rhs=lambda v: -10.0 * np.ones_like(v))
    assert excinfo.value.clipped_mass > 0
    assert excinfo.value.trajectory is not None


def test_step_with_zero_rhs():
    grid = make_grid(2, 1.0, 4)
    n = DensityField(grid, np.linspace(0.0, 1.0, grid.size))
    updated = step(n, lambda v: np.zeros_like(v), 0.5)
    np.testing.assert_array_equal(updated.values, n.values)
    assert integrate(updated) == integrate(n)
    with pytest.raises(ConfigurationError):
        step(n, lambda v: np.zeros_like(v), 0.0)


def test_trajectory_times_must_increase():
    grid = make_grid(1, 1.0, 4)
    n = DensityField.zeros(grid)
    trajectory = Trajectory(grid=grid)
    trajectory.append(n, SnapshotLog(0.5, 0.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        trajectory.append(n, SnapshotLog(0.5, 0.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        trajectory.append(DensityField.zeros(make_grid(1, 1.0, 6)), SnapshotLog(1.0, 0.0, 0.0, 0.0))


def test_saved_trajectory_reloads_exactly(tmp_path):
    grid = make_grid(2, 2.0, 8)
    rng = np.random.default_rng(12)
    n0 = DensityField(grid, rng.random(grid.size) * np.exp(-np.sum(grid.nodes**2, axis=-1)))
    trajectory = evolve(n0, EvolutionConfig(dt=0.05, t_end=0.2, sigma_E=0.4, record_every=2), LIGHT, PARAMS)

    store = SnapshotStore(str(tmp_path))
    store.save_trajectory(trajectory, {"sigma_E": 0.4})
    with open(os.path.join(tmp_path, "trajectory.csv"), encoding="utf-8") as f:
        assert f.readline().strip() == "t,total_number,max_residual,min_value"
    with open(os.path.join(tmp_path, "snapshots", "snapshot_00000.csv"), encoding="utf-8") as f:
        assert f.readline().strip() == "q_1,q_2,n"

    loaded = load_trajectory(str(tmp_path))
    assert loaded.grid == grid
    assert loaded.times == trajectory.times
    for original, restored in zip(trajectory.snapshots, loaded.snapshots):
        np.testing.assert_array_equal(original.values, restored.values)
    np.testing.assert_array_equal(loaded.totals, trajectory.totals)
