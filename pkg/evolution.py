import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from alive_progress import alive_bar

from dispersion import DispersionModel, PhysicalParams
from errors import ConfigurationError, DivergenceError, StepSizeError
from grid import DensityField, MomentumGrid, integrate
from kinetics import (
    CollisionKernel,
    ReservoirSpec,
    apply_identification,
    evaluate_form,
    linear_form,
)
from utils import setup_logger

logger = setup_logger("Evolution")

MODES = ("linear", "nonlinear")
# largest clipped mass per step, relative to the total number
CLIP_TOLERANCE = 1e-8

Rhs = Callable[[np.ndarray], np.ndarray]


@dataclass
class EvolutionConfig:
    dt: float = 0.01
    t_end: float = 1.0
    sigma_E: Optional[float] = None
    mode: str = "nonlinear"
    record_every: int = 1
    retain_unit_occupation: bool = False
    progress: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}", "kinetics")
        if not self.t_end >= 0:
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}", "kinetics")
        if self.sigma_E is not None and not self.sigma_E > 0:
            raise ConfigurationError(
                f"mollifier width sigma_E must be positive, got {self.sigma_E}", "kinetics"
            )
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode}", "kinetics")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1", "kinetics")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9)) if self.t_end > 0 else 0


@dataclass(frozen=True)
class SnapshotLog:
    t: float
    total_number: float
    max_residual: float
    min_value: float
    clipped_mass: float = 0.0

    @property
    def positive(self) -> bool:
        return self.min_value >= 0.0


@dataclass
class Trajectory:
    grid: MomentumGrid
    times: List[float] = field(default_factory=list)
    snapshots: List[DensityField] = field(default_factory=list)
    logs: List[SnapshotLog] = field(default_factory=list)

    def append(self, n: DensityField, log: SnapshotLog):
        if n.grid != self.grid:
            raise ConfigurationError("snapshot grid differs from the trajectory grid", "kinetics")
        if self.times and not log.t > self.times[-1]:
            raise ConfigurationError("snapshot times must be strictly increasing", "kinetics")
        self.times.append(log.t)
        self.snapshots.append(n)
        self.logs.append(log)

    @property
    def final(self) -> DensityField:
        return self.snapshots[-1]

    @property
    def totals(self) -> np.ndarray:
        return np.array([log.total_number for log in self.logs])

    def relative_drift(self) -> float:
        totals = self.totals
        if totals.size == 0 or totals[0] == 0:
            return 0.0
        return float(np.max(np.abs(totals - totals[0])) / totals[0])


def build_rhs(
    grid: MomentumGrid,
    config: EvolutionConfig,
    model: DispersionModel,
    params: PhysicalParams,
    reservoir: Optional[ReservoirSpec] = None,
    workers: int = 1,
) -> Tuple[Rhs, CollisionKernel]:
    """Right-hand side for the configured mode, as a map on raw node values."""
    if config.mode == "nonlinear" and not config.retain_unit_occupation:
        kernel = CollisionKernel(grid, model, params, config.sigma_E, workers=workers)
        return kernel.quadratic_rhs, kernel

    if reservoir is None:
        reservoir = ReservoirSpec(beta=params.beta, occupation=0.0, dispersion=model)
    kernel = CollisionKernel.for_reservoir(grid, reservoir, params, config.sigma_E, workers=workers)
    form = linear_form(reservoir)
    if config.mode == "nonlinear":
        form = apply_identification(form, retain_unit_occupation=True)

    def rhs(values: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(values)):
            return np.full_like(values, np.nan)
        # intermediate stages may dip below zero by round-off
        return evaluate_form(DensityField(grid, np.maximum(values, 0.0)), form, kernel)

    return rhs, kernel


def rk4_update(values: np.ndarray, rhs: Rhs, dt: float) -> np.ndarray:
    k1 = rhs(values)
    k2 = rhs(values + 0.5 * dt * k1)
    k3 = rhs(values + 0.5 * dt * k2)
    k4 = rhs(values + dt * k3)
    return values + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def clip_negative(values: np.ndarray, cell_volume: float) -> Tuple[np.ndarray, float]:
    negative = values < 0
    mass = float(-np.sum(values[negative]) * cell_volume)
    return np.where(negative, 0.0, values), mass


def _checked_update(n: DensityField, rhs: Rhs, dt: float) -> Tuple[DensityField, float, float]:
    raw = rk4_update(n.values, rhs, dt)
    if not np.all(np.isfinite(raw)):
        raise DivergenceError("state became NaN or inf during a step")
    clipped, mass = clip_negative(raw, n.grid.cell_volume)
    total = integrate(n)
    if mass > CLIP_TOLERANCE * total:
        raise StepSizeError(
            f"clipped mass {mass:.3e} exceeds {CLIP_TOLERANCE} of the total {total:.6g}; reduce dt",
            clipped_mass=mass,
        )
    return DensityField(n.grid, clipped), mass, float(raw.min())


def step(n: DensityField, rhs: Rhs, dt: float) -> DensityField:
    """One classical fourth-order Runge-Kutta step, negatives clipped to 0."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive", "kinetics")
    updated, _, _ = _checked_update(n, rhs, dt)
    return updated


def _snapshot_log(n: DensityField, rhs: Rhs, t: float, min_value: float, clipped: float) -> SnapshotLog:
    residual = float(np.max(np.abs(rhs(n.values)))) if n.values.size else 0.0
    return SnapshotLog(
        t=t,
        total_number=integrate(n),
        max_residual=residual,
        min_value=min_value,
        clipped_mass=clipped,
    )


def evolve(
    n0: DensityField,
    config: EvolutionConfig,
    model: DispersionModel,
    params: PhysicalParams,
    reservoir: Optional[ReservoirSpec] = None,
    rhs: Optional[Rhs] = None,
    workers: int = 1,
) -> Trajectory:
    """
    Integrates from t = 0 to t_end with fixed steps (the last one shortened
    to land on t_end), recording every `record_every` steps and at t_end.
    """
    if rhs is None:
        rhs, _ = build_rhs(n0.grid, config, model, params, reservoir, workers)

    trajectory = Trajectory(grid=n0.grid)
    trajectory.append(n0, _snapshot_log(n0, rhs, 0.0, n0.values.min(), 0.0))

    steps = config.steps
    logger.info(
        f"Evolving {config.mode} equation: {steps} steps of dt={config.dt} to t={config.t_end}"
    )

    n = n0
    t = 0.0
    clipped_since_record = 0.0
    min_since_record = float(n0.values.min())

    def keep_last_good():
        if t > trajectory.times[-1]:
            trajectory.append(n, _snapshot_log(n, rhs, t, min_since_record, clipped_since_record))

    def advance(i: int):
        nonlocal n, t, clipped_since_record, min_since_record
        t_next = min((i + 1) * config.dt, config.t_end)
        try:
            n, clipped, raw_min = _checked_update(n, rhs, t_next - t)
        except DivergenceError as e:
            keep_last_good()
            raise DivergenceError(f"{e} at t={t_next}", trajectory=trajectory) from e
        except StepSizeError as e:
            keep_last_good()
            raise StepSizeError(
                f"{e} at t={t_next}", trajectory=trajectory, clipped_mass=e.clipped_mass
            ) from e
        t = t_next
        if clipped > 0:
            logger.warning(f"Clipped mass {clipped:.3e} at t={t}")
        clipped_since_record += clipped
        min_since_record = min(min_since_record, raw_min)
        if (i + 1) % config.record_every == 0 or i == steps - 1:
            trajectory.append(n, _snapshot_log(n, rhs, t, min_since_record, clipped_since_record))
            logger.debug(f"Snapshot at t={t}: total {trajectory.logs[-1].total_number}")
            clipped_since_record = 0.0
            min_since_record = float(n.values.min())

    if config.progress and steps > 0:
        with alive_bar(steps, title=f"evolve ({config.mode})") as bar:
            for i in range(steps):
                advance(i)
                bar()
    else:
        for i in range(steps):
            advance(i)

    logger.info(
        f"Evolution finished at t={t}: {len(trajectory.snapshots)} snapshots, "
        f"relative number drift {trajectory.relative_drift():.3e}"
    )
    return trajectory
