from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from dispersion import PhysicalParams, bogoliubov_dispersion, epsilon
from errors import ConfigurationError, SingularModeError
from utils import setup_logger

logger = setup_logger("Bogoliubov")

Number = Union[float, np.ndarray]


@dataclass(frozen=True)
class BogoliubovCoeffs:
    """u = ch x, v = sh x, so u^2 - v^2 = 1."""

    x: Number
    u: Number
    v: Number


@dataclass(frozen=True)
class QuadraticHamiltonianPoint:
    """Coefficients at one momentum: a*a term omega + t, pair term t/2."""

    omega: Number
    t: Number

    def __post_init__(self):
        if np.any(np.asarray(self.omega) < 0):
            raise ConfigurationError("omega must be >= 0", "bogoliubov")


def mean_field_point(p, params: PhysicalParams) -> QuadraticHamiltonianPoint:
    """omega = eps(p), t = gamma g(p), after mu = gamma g(0) is substituted."""
    return QuadraticHamiltonianPoint(
        omega=epsilon(p, params.m), t=params.gamma * params.g(p)
    )


def compensation_x(point: QuadraticHamiltonianPoint) -> Number:
    """
    Solves th 2x = t / (omega + t).
    Uses the equivalent 2x = ln((omega + 2t)/omega) / 2, which keeps full
    precision when t >> omega.
    """
    omega = np.asarray(point.omega, dtype=float)
    t = np.asarray(point.t, dtype=float)
    if np.any(t < 0):
        raise ConfigurationError("off-diagonal coupling t must be >= 0", "bogoliubov")
    if np.any((omega == 0) & (t > 0)):
        raise SingularModeError("omega = 0 with t > 0: the p = 0 condensate mode is excluded")

    with np.errstate(divide="ignore", invalid="ignore"):
        x = 0.25 * np.log1p(np.where(t > 0, 2.0 * t / np.where(omega > 0, omega, 1.0), 0.0))
    return x if x.ndim else float(x)


def coeffs(x: Number) -> BogoliubovCoeffs:
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise ConfigurationError("hyperbolic parameter must be finite", "bogoliubov")
    u, v = np.cosh(x_arr), np.sinh(x_arr)
    if x_arr.ndim == 0:
        return BogoliubovCoeffs(float(x_arr), float(u), float(v))
    return BogoliubovCoeffs(x_arr, u, v)


def _u_minus_v(c: BogoliubovCoeffs):
    # u - v = e^{-x} without cancellation
    return np.exp(-np.asarray(c.x, dtype=float))


def offdiagonal_residual(point: QuadraticHamiltonianPoint, c: BogoliubovCoeffs) -> Number:
    """
    Coefficient of a*(p)a*(-p): -uv(omega + t) + (u^2 + v^2) t/2,
    evaluated as -uv omega + (u - v)^2 t/2.
    """
    omega, t = np.asarray(point.omega, dtype=float), np.asarray(point.t, dtype=float)
    uv = np.asarray(c.u) * np.asarray(c.v)
    value = -uv * omega + _u_minus_v(c) ** 2 * t / 2.0
    return value if np.ndim(value) else float(value)


def diagonal_coefficient(point: QuadraticHamiltonianPoint, c: BogoliubovCoeffs) -> Number:
    """
    Coefficient of a*(p)a(p): (u^2 + v^2)(omega + t) - 4uv t/2,
    evaluated as (u - v)^2 (omega + t) + 2uv omega (both terms >= 0 for x >= 0).
    """
    omega, t = np.asarray(point.omega, dtype=float), np.asarray(point.t, dtype=float)
    uv = np.asarray(c.u) * np.asarray(c.v)
    value = _u_minus_v(c) ** 2 * (omega + t) + 2.0 * uv * omega
    return value if np.ndim(value) else float(value)


def hyperbolic_closed_forms(point: QuadraticHamiltonianPoint) -> Tuple[Number, Number]:
    """(ch 2x, sh 2x) = ((omega + t)/E, t/E) at the compensated point."""
    omega, t = np.asarray(point.omega, dtype=float), np.asarray(point.t, dtype=float)
    energy = np.sqrt(omega**2 + 2.0 * omega * t)
    return (omega + t) / energy, t / energy


def chemical_potential(params: PhysicalParams, g0: Optional[float] = None) -> float:
    """mu = lambda N0 g(0) / V = gamma g(0)."""
    g0 = params.g.at_zero if g0 is None else g0
    return params.gamma * g0


def ground_state_energy(params: PhysicalParams, N0: float) -> Tuple[float, float]:
    """
    Returns (E1, constant of the diagonal Hamiltonian):
    E1 = lambda N0^2 g(0)/2V - mu N0 with lambda/V = gamma/N0,
    constant = -lambda N0^2 g(0)/2V.
    """
    if not N0 > 0:
        raise ConfigurationError("N0 must be positive", "bogoliubov")
    g0 = params.g.at_zero
    mu = chemical_potential(params, g0)
    pair_energy = params.gamma * N0 * g0 / 2.0
    return pair_energy - mu * N0, -pair_energy


def transform_grid(grid, params: PhysicalParams) -> Dict[str, np.ndarray]:
    """
    Transformation at every node with p != 0, with the residual of the
    compensation and the deviation of the diagonal term from E(p).
    """
    nodes = grid.nodes
    keep = grid.norms > 0
    p = nodes[keep]
    point = mean_field_point(p, params)
    x = compensation_x(point)
    c = coeffs(x)
    diag = diagonal_coefficient(point, c)
    closed = bogoliubov_dispersion(p, params)
    logger.info(f"Transformed {p.shape[0]} modes (p = 0 excluded)")
    return {
        "p_abs": np.linalg.norm(p, axis=-1),
        "omega": np.asarray(point.omega),
        "t": np.asarray(point.t),
        "x": np.asarray(x),
        "u": np.asarray(c.u),
        "v": np.asarray(c.v),
        "offdiag": np.asarray(offdiagonal_residual(point, c)),
        "diagonal": np.asarray(diag),
        "E": np.asarray(closed),
    }


def log_sweep(
    omega_range: Tuple[float, float] = (1e-3, 1e3),
    t_range: Tuple[float, float] = (1e-3, 1e3),
    points: int = 100,
) -> QuadraticHamiltonianPoint:
    """
    points x points grid of (omega, t), log-spaced; the first t column is 0
    so the free case is part of every sweep.
    """
    omegas = np.logspace(np.log10(omega_range[0]), np.log10(omega_range[1]), points)
    ts = np.concatenate(
        [[0.0], np.logspace(np.log10(t_range[0]), np.log10(t_range[1]), points - 1)]
    )
    om, tt = np.meshgrid(omegas, ts, indexing="ij")
    return QuadraticHamiltonianPoint(omega=om.ravel(), t=tt.ravel())
