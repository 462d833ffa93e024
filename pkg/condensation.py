import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np
from scipy import integrate, optimize, special

from errors import ConfigurationError, DivergentOccupationError
from utils import setup_logger

logger = setup_logger("Condensation")

ZETA_3_2 = float(special.zeta(1.5, 1))
# integrand cutoff, relative to its peak
CUTOFF_RATIO = 1e-16


@dataclass(frozen=True)
class CondensateState:
    theta: float
    theta_c: float
    c: float
    rho: float

    @property
    def fraction(self) -> float:
        return self.c / self.rho


def bose_occupation(omega, beta: float, mu: float = 0.0):
    if mu > 0:
        raise ConfigurationError(f"chemical potential must be <= 0, got {mu}", "condensation")
    gap = np.asarray(omega, dtype=float) - mu
    if np.any(gap <= 0):
        raise DivergentOccupationError("omega - mu must be positive for a Bose occupation")
    with np.errstate(over="ignore"):
        occupation = 1.0 / np.expm1(beta * gap)
    return occupation if occupation.ndim else float(occupation)


def _radial_integrand(p: float, beta: float, m: float) -> float:
    if p == 0.0:
        # limit of 4 pi p^2 / (e^{beta p^2/2m} - 1)
        return 8.0 * math.pi * m / beta
    x = beta * p * p / (2.0 * m)
    if x > 700.0:
        return 0.0
    return 4.0 * math.pi * p * p / math.expm1(x)


def _radial_cutoff(beta: float, m: float) -> float:
    """Momentum beyond which the integrand is below CUTOFF_RATIO of its peak."""
    scale = math.sqrt(2.0 * m / beta)
    samples = np.linspace(0.0, 10.0 * scale, 2001)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        values = 4.0 * np.pi * samples**2 / np.expm1(beta * samples**2 / (2.0 * m))
    values[0] = _radial_integrand(0.0, beta, m)
    peak_index = int(np.argmax(values))
    peak = values[peak_index]
    threshold = CUTOFF_RATIO * peak

    lo = samples[peak_index]
    hi = 10.0 * scale
    while _radial_integrand(hi, beta, m) > threshold:
        hi *= 2.0
    return optimize.brentq(lambda p: _radial_integrand(p, beta, m) - threshold, lo, hi)


def normal_density(beta: float, m: float = 1.0) -> float:
    """
    Integral of 1/(e^{beta p^2/2m} - 1) over d^3p, as a radial quadrature.
    Closed form: (2 pi m / beta)^{3/2} zeta(3/2).
    """
    if not beta > 0:
        raise ConfigurationError("inverse temperature must be positive", "condensation")
    if math.isinf(beta):
        return 0.0
    cutoff = _radial_cutoff(beta, m)
    scale = math.sqrt(2.0 * m / beta)
    value, abserr = integrate.quad(
        _radial_integrand,
        0.0,
        cutoff,
        args=(beta, m),
        points=[scale],
        epsabs=0.0,
        epsrel=1e-11,
        limit=400,
    )
    logger.debug(f"normal_density(beta={beta}, m={m}) = {value} (+/- {abserr})")
    return value


def normal_density_closed_form(beta: float, m: float = 1.0) -> float:
    return (2.0 * math.pi * m / beta) ** 1.5 * ZETA_3_2


def critical_temperature(rho: float, m: float = 1.0, rtol: float = 1e-10) -> float:
    """theta_c solving normal_density(1/theta_c) = rho, by bisection."""
    if not rho > 0:
        raise ConfigurationError("density must be positive", "condensation")

    def excess(theta: float) -> float:
        return normal_density(1.0 / theta, m) - rho

    # bracket from the closed form, then widen until the sign changes
    guess = (rho / ZETA_3_2) ** (2.0 / 3.0) / (2.0 * math.pi * m)
    lo, hi = 0.5 * guess, 2.0 * guess
    while excess(lo) > 0:
        lo *= 0.5
    while excess(hi) < 0:
        hi *= 2.0

    theta_c = optimize.bisect(excess, lo, hi, xtol=1e-300, rtol=rtol, maxiter=200)
    logger.info(f"Critical temperature for rho={rho}, m={m}: {theta_c}")
    return float(theta_c)


def condensate_fraction(
    theta: float, rho: float = 1.0, m: float = 1.0, theta_c: float = None
) -> CondensateState:
    """Condensate weight c = rho (1 - (theta/theta_c)^{3/2}) below theta_c, else 0."""
    if theta < 0:
        raise ConfigurationError("temperature must be >= 0", "condensation")
    if theta_c is None:
        theta_c = critical_temperature(rho, m)
    if theta >= theta_c:
        c = 0.0
    else:
        c = rho * (1.0 - (theta / theta_c) ** 1.5)
    return CondensateState(theta=float(theta), theta_c=theta_c, c=c, rho=rho)


def condensate_curve(thetas: Sequence[float], rho: float = 1.0, m: float = 1.0) -> Dict[str, np.ndarray]:
    """
    Columns theta, c, normal_density, rho_check; rho_check = c + normal density
    below theta_c and equals rho there up to quadrature error.
    """
    theta_c = critical_temperature(rho, m)
    rows = {"theta": [], "c": [], "normal_density": [], "rho_check": []}
    for theta in thetas:
        state = condensate_fraction(theta, rho, m, theta_c=theta_c)
        n_normal = 0.0 if theta == 0 else normal_density(1.0 / theta, m)
        rows["theta"].append(theta)
        rows["c"].append(state.c)
        rows["normal_density"].append(n_normal)
        rows["rho_check"].append(state.c + n_normal)
    return {key: np.asarray(value, dtype=float) for key, value in rows.items()}
