import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import ConfigurationError, ModelInconsistencyError, NoSoundSpeedError
from utils import setup_logger

logger = setup_logger("Dispersion")

# Richardson ladder for E(k)/|k| at k -> 0
SOUND_SPEED_STEP = 1e-2


def _sq_norm(p) -> np.ndarray:
    """
    |p|^2 for a momentum array whose last axis holds the components.
    A 0-d input is read as a 1-d momentum.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return p * p
    return np.sum(p * p, axis=-1)


def _norm(p) -> np.ndarray:
    return np.sqrt(_sq_norm(p))


# Interaction kernels g(p) ---------------------------------------------------


class InteractionKernel(ABC):
    @abstractmethod
    def of_magnitude(self, p_abs): ...

    def __call__(self, p):
        return self.of_magnitude(_norm(p))

    @property
    def at_zero(self) -> float:
        return float(self.of_magnitude(np.asarray(0.0)))


@dataclass(frozen=True)
class ConstantInteraction(InteractionKernel):
    g0: float = 1.0

    def of_magnitude(self, p_abs):
        return np.full_like(np.asarray(p_abs, dtype=float), self.g0)


@dataclass(frozen=True)
class GaussianInteraction(InteractionKernel):
    g0: float = 1.0
    cutoff: float = 1.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ConfigurationError("interaction cutoff must be positive", "dispersion")

    def of_magnitude(self, p_abs):
        p_abs = np.asarray(p_abs, dtype=float)
        return self.g0 * np.exp(-((p_abs / self.cutoff) ** 2))


# Form factors f(k, p) --------------------------------------------------------


class FormFactor(ABC):
    @abstractmethod
    def __call__(self, k, p): ...

    def squared_modulus(self, k, p):
        return np.abs(self(k, p)) ** 2

    @property
    @abstractmethod
    def label(self) -> str: ...


@dataclass(frozen=True)
class ConstantFormFactor(FormFactor):
    value: complex = 1.0

    def __call__(self, k, p):
        shape = np.broadcast_shapes(np.shape(_sq_norm(k)), np.shape(_sq_norm(p)))
        return np.full(shape, complex(self.value))

    def squared_modulus(self, k, p):
        shape = np.broadcast_shapes(np.shape(_sq_norm(k)), np.shape(_sq_norm(p)))
        return np.full(shape, abs(complex(self.value)) ** 2)

    @property
    def label(self) -> str:
        return f"constant f = {complex(self.value)}"


@dataclass(frozen=True)
class GaussianFormFactor(FormFactor):
    amplitude: complex = 1.0
    cutoff: float = 1.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ConfigurationError("form factor cutoff must be positive", "dispersion")

    def __call__(self, k, p):
        weight = np.exp(-(_sq_norm(k) + _sq_norm(p)) / (2.0 * self.cutoff**2))
        return complex(self.amplitude) * weight

    def squared_modulus(self, k, p):
        return abs(complex(self.amplitude)) ** 2 * np.exp(
            -(_sq_norm(k) + _sq_norm(p)) / self.cutoff**2
        )

    @property
    def label(self) -> str:
        return f"gaussian f, amplitude {complex(self.amplitude)}, cutoff {self.cutoff}"


# Physical parameters --------------------------------------------------------


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    rho: float = 1.0
    g: InteractionKernel = field(default_factory=ConstantInteraction)
    f: FormFactor = field(default_factory=ConstantFormFactor)

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigurationError(f"mass must be positive, got {self.m}", "dispersion")
        if not self.beta > 0:
            raise ConfigurationError(
                f"inverse temperature must be positive, got {self.beta}", "dispersion"
            )
        if not self.gamma >= 0:
            raise ConfigurationError(f"coupling must be >= 0, got {self.gamma}", "dispersion")
        if not self.rho > 0:
            raise ConfigurationError(f"density must be positive, got {self.rho}", "dispersion")
        if self.gamma > 0 and not self.g.at_zero > 0:
            raise ConfigurationError(
                "g(0) must be positive when the coupling is on (repulsion dominates)",
                "dispersion",
            )


def epsilon(p, m: float):
    """Particle dispersion |p|^2 / 2m."""
    return _sq_norm(p) / (2.0 * m)


def bogoliubov_dispersion(p, params: PhysicalParams):
    omega = epsilon(p, params.m)
    radicand = omega**2 + 2.0 * params.gamma * omega * params.g(p)
    if np.any(radicand < 0):
        raise ModelInconsistencyError(
            "negative radicand in the Bogoliubov dispersion (attractive regime)"
        )
    return np.sqrt(radicand)


# Dispersion models ----------------------------------------------------------


class DispersionModel(ABC):
    """Excitation law E(k); isotropic built-ins depend on |k| only."""

    kind = "abstract"

    @abstractmethod
    def of_magnitude(self, k_abs): ...

    def energy(self, k):
        return self.of_magnitude(_norm(k))

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Free(DispersionModel):
    m: float = 1.0
    kind = "free"

    def of_magnitude(self, k_abs):
        k_abs = np.asarray(k_abs, dtype=float)
        return k_abs**2 / (2.0 * self.m)

    def describe(self) -> dict:
        return {"kind": self.kind, "m": self.m}


@dataclass(frozen=True)
class BogoliubovBulk(DispersionModel):
    m: float = 1.0
    gamma: float = 1.0
    g: InteractionKernel = field(default_factory=ConstantInteraction)
    kind = "bogoliubov"

    def of_magnitude(self, k_abs):
        k_abs = np.asarray(k_abs, dtype=float)
        omega = k_abs**2 / (2.0 * self.m)
        radicand = omega**2 + 2.0 * self.gamma * omega * self.g.of_magnitude(k_abs)
        if np.any(radicand < 0):
            raise ModelInconsistencyError(
                "negative radicand in the Bogoliubov dispersion (attractive regime)"
            )
        return np.sqrt(radicand)

    @classmethod
    def from_params(cls, params: PhysicalParams) -> "BogoliubovBulk":
        return cls(m=params.m, gamma=params.gamma, g=params.g)

    def describe(self) -> dict:
        return {"kind": self.kind, "m": self.m, "gamma": self.gamma}


@dataclass(frozen=True)
class Radiative(DispersionModel):
    c: float = 1.0
    kind = "radiative"

    def of_magnitude(self, k_abs):
        return self.c * np.asarray(k_abs, dtype=float)

    def describe(self) -> dict:
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class Polaron(DispersionModel):
    omega0: float = 1.0
    kind = "polaron"

    def of_magnitude(self, k_abs):
        return np.full_like(np.asarray(k_abs, dtype=float), self.omega0)

    def describe(self) -> dict:
        return {"kind": self.kind, "omega0": self.omega0}


@dataclass(frozen=True, eq=False)
class Tabulated(DispersionModel):
    """
    Linear interpolation in |k| over sampled (|k|, E) pairs.
    Beyond the last sample the last segment is extended linearly.
    """

    k_samples: np.ndarray
    e_samples: np.ndarray
    source: Optional[str] = None
    kind = "tabulated"

    def __post_init__(self):
        k = np.asarray(self.k_samples, dtype=float).ravel()
        e = np.asarray(self.e_samples, dtype=float).ravel()
        if k.size < 2 or k.size != e.size:
            raise ConfigurationError("tabulated dispersion needs >= 2 (|k|, E) rows", "dispersion")
        if np.any(np.diff(k) <= 0):
            raise ConfigurationError(
                "tabulated dispersion: first column must be strictly increasing", "dispersion"
            )
        if k[0] < 0 or np.any(e < 0):
            raise ModelInconsistencyError("tabulated dispersion must have |k| >= 0 and E >= 0")
        object.__setattr__(self, "k_samples", k)
        object.__setattr__(self, "e_samples", e)

    @classmethod
    def from_csv(cls, path: str) -> "Tabulated":
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline()
        try:
            [float(x) for x in first.split(",")]
            skip = 0
        except ValueError:
            skip = 1  # header row
        table = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, comments="#")
        if table.shape[1] != 2:
            raise ConfigurationError(f"{path}: expected two columns (|k|, E)", "dispersion")
        logger.info(f"Loaded tabulated dispersion with {table.shape[0]} rows from {path}")
        return cls(table[:, 0], table[:, 1], source=path)

    def of_magnitude(self, k_abs):
        k_abs = np.asarray(k_abs, dtype=float)
        k, e = self.k_samples, self.e_samples
        values = np.interp(k_abs, k, e)
        slope = (e[-1] - e[-2]) / (k[-1] - k[-2])
        beyond = k_abs > k[-1]
        values = np.where(beyond, e[-1] + slope * (k_abs - k[-1]), values)
        return np.maximum(values, 0.0)

    def describe(self) -> dict:
        return {"kind": self.kind, "source": self.source, "rows": int(self.k_samples.size)}


def energy_difference(p, k, model: DispersionModel, m: float):
    """E(p, k) = E(k) + eps(p - k) - eps(p): transition p -> p - k emitting k."""
    p = np.asarray(p, dtype=float)
    k = np.asarray(k, dtype=float)
    return model.energy(k) + epsilon(p - k, m) - epsilon(p, m)


def reverse_energy_difference(q, k, model: DispersionModel, m: float):
    """E(k) + eps(q) - eps(q + k): the transition q + k -> q."""
    q = np.asarray(q, dtype=float)
    k = np.asarray(k, dtype=float)
    return model.energy(k) + epsilon(q, m) - epsilon(q + k, m)


def sound_speed(model: DispersionModel, h: float = SOUND_SPEED_STEP) -> float:
    """
    lim E(k)/|k| as k -> 0, by two-level Richardson extrapolation on h, h/2, h/4.
    """
    ks = np.array([h, h / 2.0, h / 4.0])
    ratios = np.asarray(model.of_magnitude(ks), dtype=float) / ks

    if not np.all(np.isfinite(ratios)):
        raise NoSoundSpeedError(f"{model.kind}: E(k)/|k| is not finite near k = 0")
    # E(k)/|k| ~ 1/k signals a gapped spectrum
    if ratios[2] > 2.0 * ratios[0] and ratios[2] > 0:
        raise NoSoundSpeedError(f"{model.kind}: E(k)/|k| diverges as k -> 0")

    first = 2.0 * ratios[1:] - ratios[:-1]
    limit = (4.0 * first[1] - first[0]) / 3.0

    scale = max(float(np.max(np.abs(ratios))), 1e-300)
    if not limit > 1e-8 * scale:
        raise NoSoundSpeedError(f"{model.kind}: E(k)/|k| vanishes as k -> 0")
    return float(limit)


def default_sigma(grid, model: DispersionModel, m: float) -> float:
    """
    4 x the energy change across one cell, taking the larger of the particle
    slope q_max/m and the mean excitation slope E(q_max)/q_max.
    """
    q_max = grid.q_max
    mean_slope = float(model.of_magnitude(np.asarray(q_max))) / q_max
    spacing = grid.spacing * max(q_max / m, mean_slope)
    return 4.0 * spacing


def build_model(section: dict, params: PhysicalParams) -> DispersionModel:
    """Dispersion model from a config section."""
    kind = section.get("kind", "radiative")
    if kind == "free":
        return Free(m=float(section.get("m", params.m)))
    if kind == "bogoliubov":
        return BogoliubovBulk(
            m=float(section.get("m", params.m)),
            gamma=float(section.get("gamma", params.gamma)),
            g=params.g,
        )
    if kind == "radiative":
        return Radiative(c=float(section.get("c", 1.0)))
    if kind == "polaron":
        return Polaron(omega0=float(section.get("omega0", 1.0)))
    if kind == "tabulated":
        if "path" not in section:
            raise ConfigurationError("tabulated dispersion needs a 'path'", "dispersion")
        return Tabulated.from_csv(section["path"])
    raise ConfigurationError(f"unknown dispersion kind: {kind}", "dispersion")


def build_interaction(section: Optional[dict]) -> InteractionKernel:
    section = section or {}
    kind = section.get("kind", "constant")
    if kind == "constant":
        return ConstantInteraction(g0=float(section.get("g0", 1.0)))
    if kind == "gaussian":
        return GaussianInteraction(
            g0=float(section.get("g0", 1.0)), cutoff=float(section.get("cutoff", 1.0))
        )
    raise ConfigurationError(f"unknown interaction kind: {kind}", "dispersion")


def build_form_factor(section: Optional[dict]) -> FormFactor:
    section = section or {}
    kind = section.get("kind", "constant")
    if kind == "constant":
        return ConstantFormFactor(value=complex(section.get("value", 1.0)))
    if kind == "gaussian":
        return GaussianFormFactor(
            amplitude=complex(section.get("amplitude", 1.0)), cutoff=float(section.get("cutoff", 1.0))
        )
    raise ConfigurationError(f"unknown form factor kind: {kind}", "dispersion")


def polaron_sufficient_bound(model: Polaron) -> float:
    # threshold quoted for the polaron example; the exact infimum is sqrt(2 omega0)
    return math.sqrt(model.omega0)
