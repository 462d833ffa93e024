import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from errors import ConfigurationError, InvalidDensityError
from utils import setup_logger

logger = setup_logger("Grid")

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MomentumGrid:
    """
    Uniform cell-centered Cartesian grid on [-q_max, q_max]^d.
    Nodes are stored flat, C order over the axes, shape (N**d, d).
    """

    d: int
    q_max: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"grid dimension must be 1, 2 or 3, got {self.d}", "grid")
        if not self.q_max > 0:
            raise ConfigurationError(f"q_max must be positive, got {self.q_max}", "grid")
        if self.N < 2 or self.N % 2 != 0:
            raise ConfigurationError(
                f"points per axis must be even and >= 2, got {self.N}", "grid"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.q_max / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.d

    @cached_property
    def axis(self) -> np.ndarray:
        axis = -self.q_max + (np.arange(self.N) + 0.5) * self.spacing
        axis.flags.writeable = False
        return axis

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def norms(self) -> np.ndarray:
        norms = np.linalg.norm(self.nodes, axis=-1)
        norms.flags.writeable = False
        return norms

    @cached_property
    def mirror_index(self) -> np.ndarray:
        """Index of -q for every node q."""
        idx = np.arange(self.size).reshape(self.shape)
        mirrored = idx[(slice(None, None, -1),) * self.d].ravel()
        mirrored.flags.writeable = False
        return mirrored

    def describe(self) -> dict:
        return {"d": self.d, "q_max": self.q_max, "N": self.N}


def make_grid(d: int, q_max: float, N: int) -> MomentumGrid:
    grid = MomentumGrid(int(d), float(q_max), int(N))
    logger.debug(f"Grid d={grid.d} q_max={grid.q_max} N={grid.N} spacing={grid.spacing}")
    return grid


@dataclass(frozen=True)
class DensityField:
    grid: MomentumGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise InvalidDensityError(
                f"density has {values.size} values, grid has {self.grid.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidDensityError("density contains NaN or inf")
        if np.any(values < 0):
            raise InvalidDensityError(f"density is negative (min {values.min()})")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: MomentumGrid) -> "DensityField":
        return cls(grid, np.zeros(grid.size))

    @property
    def max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


def integrate(field: DensityField) -> float:
    return float(field.values.sum() * field.grid.cell_volume)


def mollified_delta(x, sigma: float):
    """Gaussian approximation of the energy delta; integrates to 1."""
    if not sigma > 0:
        raise ConfigurationError(f"mollifier width must be positive, got {sigma}", "grid")
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * SQRT_2PI)
