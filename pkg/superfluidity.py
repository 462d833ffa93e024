import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from dispersion import DispersionModel, PhysicalParams, sound_speed
from errors import NoSoundSpeedError
from grid import DensityField, integrate
from kinetics import (
    TWO_PI,
    CollisionKernel,
    ReservoirSpec,
    _blocks,
    evaluate_form,
    linear_form,
    rate_model,
)
from utils import setup_logger

logger = setup_logger("Superfluidity")


@dataclass(frozen=True)
class SuperfluidityReport:
    """
    Residuals of a stationarity check. The product residuals use the
    mollified delta scaled to 1 at zero argument, relative to max n.
    """

    applicable: bool
    support_ok: bool = False
    cells_outside: int = 0
    sound_speed: Optional[float] = None
    prod1_residual: float = 0.0
    prod2_residual: float = 0.0
    nonlinear_residual: float = 0.0
    linear_residual: float = 0.0
    mollifier_bound: float = 0.0
    sigma_E: Optional[float] = None
    form_factor: str = ""
    note: str = ""

    @property
    def passed(self) -> bool:
        return (
            self.applicable
            and self.support_ok
            and self.nonlinear_residual <= self.mollifier_bound
        )

    @classmethod
    def not_applicable(cls, reason: str, form_factor: str = "") -> "SuperfluidityReport":
        return cls(applicable=False, note=reason, form_factor=form_factor)

    def as_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def _product_residuals(n: np.ndarray, kernel: CollisionKernel):
    """max n(q_i) delta(x_ij) and max n(q_j) delta(x_ij) over i != j."""
    size = n.size
    prod1 = 0.0
    prod2 = 0.0
    for rows in _blocks(size, kernel.block):
        x = kernel.energy_argument(rows, slice(None))
        peak = np.exp(-0.5 * (x / kernel.sigma_E) ** 2)
        _, _, diagonal = kernel._pairs(rows, slice(None))
        peak[diagonal] = 0.0
        prod1 = max(prod1, float(np.max(n[rows][:, None] * peak)))
        prod2 = max(prod2, float(np.max(peak * n[None, :])))
    return prod1, prod2


def mollifier_bound(n: DensityField, kernel: CollisionKernel) -> float:
    """
    Upper bound on ||nonlinear rhs||_inf / ||n||_inf from the smallest
    off-shell distance between occupied cells:
    2 pi max|f|^2 delta_sigma(gap) int n.
    """
    occupied = np.flatnonzero(n.values > 0)
    if occupied.size < 2:
        return 0.0
    nodes = n.grid.nodes[occupied]
    eps = kernel._eps[occupied]
    index = np.arange(occupied.size)
    gap = math.inf
    f2_max = 0.0
    for rows in _blocks(occupied.size, kernel.block):
        k = nodes[rows][:, None, :] - nodes[None, :, :]
        x = kernel.model.energy(k) + eps[None, :] - eps[rows][:, None]
        f2 = np.broadcast_to(kernel.form_factor.squared_modulus(k, nodes[rows][:, None, :]), x.shape)
        off = index[rows][:, None] != index[None, :]
        gap = min(gap, float(np.min(np.abs(x[off]))))
        f2_max = max(f2_max, float(np.max(f2[off])))
    density = math.exp(-0.5 * (gap / kernel.sigma_E) ** 2) / (
        kernel.sigma_E * math.sqrt(2.0 * math.pi)
    )
    return TWO_PI * f2_max * density * integrate(n)


def superfluidity_check(
    n: DensityField,
    model: DispersionModel,
    params: PhysicalParams,
    tol: float = 1e-6,
    sigma_E: Optional[float] = None,
    reservoir: Optional[ReservoirSpec] = None,
    kernel: Optional[CollisionKernel] = None,
) -> SuperfluidityReport:
    """
    Support test |q| <= m c, product residuals, nonlinear and linear
    stationarity residuals, and the mollifier bound for the nonlinear one.
    The linear residual uses `reservoir` (default: N = 0 at params.beta).
    """
    form_label = params.f.label
    try:
        c = sound_speed(model)
    except NoSoundSpeedError as e:
        logger.warning(f"Superfluidity check not applicable: {e}")
        return SuperfluidityReport.not_applicable(str(e), form_label)

    if reservoir is None:
        reservoir = ReservoirSpec(beta=params.beta, occupation=0.0, dispersion=model)
    if kernel is None:
        kernel = CollisionKernel(n.grid, model, params, sigma_E, beta=reservoir.beta)

    values = n.values
    peak = n.max
    if peak == 0.0:
        return SuperfluidityReport(
            applicable=True,
            support_ok=True,
            sound_speed=c,
            sigma_E=kernel.sigma_E,
            form_factor=form_label,
        )

    radius = params.m * c
    occupied = values > tol * peak
    outside = int(np.count_nonzero(occupied & (n.grid.norms > radius * (1.0 + 1e-12))))

    prod1, prod2 = _product_residuals(values, kernel)
    nonlinear = float(np.max(np.abs(kernel.quadratic_rhs(values)))) / peak

    linear_kernel = kernel
    if rate_model(reservoir, params) != model or reservoir.beta != kernel.beta:
        linear_kernel = CollisionKernel.for_reservoir(n.grid, reservoir, params, kernel.sigma_E)
    linear = float(np.max(np.abs(evaluate_form(n, linear_form(reservoir), linear_kernel)))) / peak

    report = SuperfluidityReport(
        applicable=True,
        support_ok=outside == 0,
        cells_outside=outside,
        sound_speed=c,
        prod1_residual=prod1 / peak,
        prod2_residual=prod2 / peak,
        nonlinear_residual=nonlinear,
        linear_residual=linear,
        mollifier_bound=mollifier_bound(n, kernel),
        sigma_E=kernel.sigma_E,
        form_factor=form_label,
        note="" if outside == 0 else f"{outside} occupied cells beyond |q| = m c = {radius}",
    )
    logger.info(
        f"Superfluidity check: support {'ok' if report.support_ok else 'violated'}, "
        f"nonlinear {nonlinear:.3e} (bound {report.mollifier_bound:.3e}), linear {linear:.3e}"
    )
    return report
