import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from dispersion import DispersionModel, Polaron, Radiative, polaron_sufficient_bound
from errors import ConfigurationError
from utils import setup_logger

logger = setup_logger("Landau")


@dataclass(frozen=True)
class StabilityReport:
    v_c: float
    argmin_k: Optional[float]  # None when the infimum is approached as k -> 0
    at_zero: bool
    sufficient_bound: Optional[float] = None
    note: str = ""

    def is_superfluid_at(self, u) -> bool:
        speed = float(np.linalg.norm(np.atleast_1d(np.asarray(u, dtype=float))))
        return speed < self.v_c


def stability_margin(u, k, model: DispersionModel, m: float):
    """Delta(u, k) = E(k) - u.k + |k|^2/2m."""
    u = np.asarray(u, dtype=float)
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        u_dot_k = u * k
        k_sq = k * k
    else:
        u_dot_k = np.sum(u * k, axis=-1)
        k_sq = np.sum(k * k, axis=-1)
    return model.energy(k) - u_dot_k + k_sq / (2.0 * m)


def log_k_grid(k_min: float = 1e-4, k_max: float = 10.0, points: int = 400) -> np.ndarray:
    if not (0 < k_min < k_max) or points < 2:
        raise ConfigurationError("k grid needs 0 < k_min < k_max and >= 2 points", "landau")
    return np.logspace(math.log10(k_min), math.log10(k_max), points)


def _threshold_velocity(model: DispersionModel, m: float, direction: np.ndarray):
    """(E(k) + k^2/2m)/|k| along the direction of k, as a function of |k|."""

    def ratio(k_abs):
        k_abs = np.asarray(k_abs, dtype=float)
        k_vec = k_abs[..., None] * direction
        return (model.energy(k_vec) + k_abs**2 / (2.0 * m)) / k_abs

    return ratio


def _limit_at_zero(ratio, h: float) -> float:
    """Richardson extrapolation of ratio(k) to k = 0 from h, h/2, h/4."""
    values = ratio(np.array([h, h / 2.0, h / 4.0]))
    first = 2.0 * values[1:] - values[:-1]
    return float((4.0 * first[1] - first[0]) / 3.0)


def critical_velocity(
    model: DispersionModel, m: float, k_grid, direction=None
) -> StabilityReport:
    """
    v_c = inf over k of (E(k) + k^2/2m)/|k|: the grid minimum refined by a
    golden-section search, or the k -> 0 limit when the minimum sits at the
    smallest |k| of the grid.
    """
    k_grid = np.sort(np.asarray(k_grid, dtype=float).ravel())
    if k_grid.size == 0:
        raise ConfigurationError("critical_velocity needs a non-empty k grid", "landau")
    if np.any(k_grid <= 0):
        raise ConfigurationError("k grid magnitudes must be positive", "landau")

    if direction is None:
        direction = np.array([1.0])
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)

    ratio = _threshold_velocity(model, m, direction)
    values = ratio(k_grid)
    i = int(np.argmin(values))

    if i == 0:
        limit = _limit_at_zero(ratio, k_grid[0])
        v_c = max(0.0, min(limit, float(values[0])))
        report = StabilityReport(v_c=v_c, argmin_k=None, at_zero=True)
    elif i == k_grid.size - 1:
        logger.warning("Threshold velocity still decreasing at the largest |k| of the grid")
        report = StabilityReport(v_c=float(values[i]), argmin_k=float(k_grid[i]), at_zero=False)
    else:
        result = optimize.minimize_scalar(
            lambda s: float(ratio(np.asarray(s))),
            bracket=(k_grid[i - 1], k_grid[i], k_grid[i + 1]),
            method="golden",
            tol=1e-12,
        )
        v_c, k_star = float(result.fun), float(result.x)
        if v_c > values[i]:
            v_c, k_star = float(values[i]), float(k_grid[i])
        report = StabilityReport(v_c=v_c, argmin_k=k_star, at_zero=False)

    bound, note = _sufficient_bound(model, m)
    report = StabilityReport(
        v_c=report.v_c,
        argmin_k=report.argmin_k,
        at_zero=report.at_zero,
        sufficient_bound=bound,
        note=note,
    )
    logger.info(
        f"Critical velocity for {model.kind}: v_c = {report.v_c}"
        + (" (k -> 0)" if report.at_zero else f" at |k| = {report.argmin_k}")
    )
    return report


def _sufficient_bound(model: DispersionModel, m: float):
    if isinstance(model, Radiative):
        return model.c, "threshold |u| < c; exact"
    if isinstance(model, Polaron):
        return (
            polaron_sufficient_bound(model),
            "threshold |u| < sqrt(omega0) is sufficient but not tight; "
            f"exact infimum is sqrt(2 omega0 / m) = {math.sqrt(2.0 * model.omega0 / m)}",
        )
    return None, ""


def instability_witness(u, model: DispersionModel, m: float, k_grid) -> Optional[np.ndarray]:
    """
    A transfer momentum k parallel to u with negative margin, or None.
    k parallel to u is the worst case for isotropic models.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    speed = np.linalg.norm(u)
    if speed == 0:
        return None
    k_vecs = np.asarray(k_grid, dtype=float)[:, None] * (u / speed)
    margins = stability_margin(u, k_vecs, model, m)
    negative = np.flatnonzero(margins < 0)
    if negative.size == 0:
        return None
    return k_vecs[negative[np.argmin(margins[negative])]]
