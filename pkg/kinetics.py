"""
Master equations for the condensate density n(q) coupled to the excitation
field of the normal phase.

Every transition is a pair of grid nodes (i, j): a particle at q_i emits an
excitation of momentum k = q_i - q_j and lands on q_j. With

    A[i, j] = 2 pi |f(k, q_i)|^2 delta_sigma(E(k) + eps(q_j) - eps(q_i)) dq^d
    G = A * n+(k),   L = A * (1 + n+(k)) = A + G

the linear equation reads

    dn/dt = (N + 1) * (G n + L^T n) - n * (L (N + 1) + G^T (N + 1))

and its first/second kernel terms are the A[i, j] / A[j, i] halves. Momenta
outside the box never appear, so the truncation is absorbing and the total
number is conserved exactly by the i <-> j pairing.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterator, Optional, Union

import numpy as np

from dispersion import DispersionModel, Free, PhysicalParams, default_sigma, epsilon
from errors import ConfigurationError, ModelInconsistencyError
from grid import DensityField, MomentumGrid, mollified_delta
from utils import setup_logger

logger = setup_logger("Kinetics")

TWO_PI = 2.0 * math.pi
# dense kernels above this many nodes are evaluated block by block instead
DENSE_LIMIT = 2048
PANEL_ELEMENTS = 2_000_000

RATE_DISPERSIONS = ("excitation", "bare")

Occupation = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    """
    Normal-phase reservoir: temperature, the background occupation N(p) of the
    condensate modes and the excitation law entering the rates.
    `rate_dispersion` is "excitation" (E(k)) or "bare" (k^2/2m).
    """

    beta: float
    occupation: Occupation = 0.0
    dispersion: Optional[DispersionModel] = None
    rate_dispersion: str = "excitation"

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError("reservoir inverse temperature must be positive", "kinetics")
        if self.rate_dispersion not in RATE_DISPERSIONS:
            raise ConfigurationError(
                f"rate_dispersion must be one of {RATE_DISPERSIONS}, got {self.rate_dispersion}",
                "kinetics",
            )

    def occupation_on(self, grid: MomentumGrid) -> np.ndarray:
        occ = self.occupation
        if callable(occ):
            values = np.asarray(occ(grid.nodes), dtype=float).reshape(-1)
        else:
            values = np.asarray(occ, dtype=float).reshape(-1)
            if values.size == 1:
                values = np.full(grid.size, float(values[0]))
        if values.size != grid.size:
            raise ConfigurationError("reservoir occupation does not match the grid", "kinetics")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigurationError("reservoir occupation must be finite and >= 0", "kinetics")
        return values


def rate_model(reservoir: ReservoirSpec, params: PhysicalParams) -> DispersionModel:
    """Dispersion entering the rates: E(k), or the bare omega(k) = k^2/2m."""
    if reservoir.rate_dispersion == "bare" or reservoir.dispersion is None:
        return Free(m=params.m)
    return reservoir.dispersion


def _blocks(size: int, block: int) -> Iterator[slice]:
    for start in range(0, size, block):
        yield slice(start, min(start + block, size))


class CollisionKernel:
    """
    Transition weights A[i, j] and thermal factors n+(k_ij) on a grid.
    Small grids keep dense matrices; larger ones recompute panels per call.
    """

    def __init__(
        self,
        grid: MomentumGrid,
        model: DispersionModel,
        params: PhysicalParams,
        sigma_E: Optional[float] = None,
        beta: Optional[float] = None,
        precompute: Optional[bool] = None,
        workers: int = 1,
    ):
        self.grid = grid
        self.model = model
        self.m = params.m
        self.form_factor = params.f
        cell_energy = default_sigma(grid, model, params.m) / 4.0
        self.sigma_E = 4.0 * cell_energy if sigma_E is None else float(sigma_E)
        if not self.sigma_E > 0:
            raise ConfigurationError(
                f"mollifier width sigma_E must be positive, got {self.sigma_E}", "kinetics"
            )
        if self.sigma_E < cell_energy:
            logger.warning(
                f"sigma_E={self.sigma_E} is below the energy change across one cell "
                f"({cell_energy:.3g}); the mollified delta is under-resolved"
            )
        self.beta = beta
        self.workers = max(1, int(workers))
        self.block = max(1, PANEL_ELEMENTS // grid.size)
        self.precompute = grid.size <= DENSE_LIMIT if precompute is None else bool(precompute)

        self._eps = epsilon(grid.nodes, self.m)
        self._A: Optional[np.ndarray] = None
        self._Np: Optional[np.ndarray] = None

        if self.precompute:
            self._A = self._assemble(self.weight_panel)
            if beta is not None:
                self._Np = self._assemble(self.thermal_panel)
            logger.info(
                f"Precomputed {grid.size}x{grid.size} kernel ({model.kind}, sigma_E={self.sigma_E})"
            )
        else:
            logger.info(f"On-the-fly kernel over {grid.size} nodes, block {self.block}")

    @classmethod
    def for_reservoir(
        cls,
        grid: MomentumGrid,
        reservoir: ReservoirSpec,
        params: PhysicalParams,
        sigma_E: Optional[float] = None,
        **kwargs,
    ) -> "CollisionKernel":
        return cls(
            grid, rate_model(reservoir, params), params, sigma_E, beta=reservoir.beta, **kwargs
        )

    # pair panels ------------------------------------------------------------

    def _pairs(self, rows: slice, cols: slice):
        nodes = self.grid.nodes
        q_r, q_c = nodes[rows], nodes[cols]
        k = q_r[:, None, :] - q_c[None, :, :]
        idx_r = np.arange(self.grid.size)[rows]
        idx_c = np.arange(self.grid.size)[cols]
        diagonal = idx_r[:, None] == idx_c[None, :]
        return q_r, k, diagonal

    def energy_argument(self, rows: slice = slice(None), cols: slice = slice(None)) -> np.ndarray:
        """E(q_i - q_j) + eps(q_j) - eps(q_i) over a block of pairs."""
        _, k, _ = self._pairs(rows, cols)
        return self.model.energy(k) + self._eps[cols][None, :] - self._eps[rows][:, None]

    def form_panel(self, rows: slice = slice(None), cols: slice = slice(None)) -> np.ndarray:
        q_r, k, _ = self._pairs(rows, cols)
        return np.broadcast_to(
            self.form_factor.squared_modulus(k, q_r[:, None, :]), k.shape[:2]
        )

    def weight_panel(self, rows: slice = slice(None), cols: slice = slice(None)) -> np.ndarray:
        _, k, diagonal = self._pairs(rows, cols)
        x = self.energy_argument(rows, cols)
        weights = (
            TWO_PI
            * self.form_panel(rows, cols)
            * mollified_delta(x, self.sigma_E)
            * self.grid.cell_volume
        )
        # k = 0: the two kernel terms cancel identically
        weights[diagonal] = 0.0
        return weights

    def thermal_panel(self, rows: slice = slice(None), cols: slice = slice(None)) -> np.ndarray:
        """n+(k) = 1/(e^{beta E(k)} - 1); zero on the diagonal."""
        if self.beta is None:
            raise ConfigurationError("thermal factors need a reservoir temperature", "kinetics")
        _, k, diagonal = self._pairs(rows, cols)
        energies = np.array(self.model.energy(k), dtype=float)
        energies[diagonal] = np.inf
        if np.any(energies <= 0):
            raise ModelInconsistencyError(
                f"{self.model.kind}: excitation energy must be positive for k != 0"
            )
        with np.errstate(over="ignore", invalid="ignore"):
            factors = 1.0 / np.expm1(self.beta * energies)
        factors[diagonal] = 0.0
        return factors

    def _assemble(self, panel) -> np.ndarray:
        size = self.grid.size
        out = np.empty((size, size))
        blocks = list(_blocks(size, self.block))

        def fill(rows: slice):
            out[rows] = panel(rows, slice(None))

        self._map(fill, blocks)
        return out

    def _map(self, func, blocks):
        if self.workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(func, blocks))
        else:
            for rows in blocks:
                func(rows)

    # dense views ------------------------------------------------------------

    @property
    def weights(self) -> np.ndarray:
        if self._A is None:
            return self._assemble(self.weight_panel)
        return self._A

    @property
    def thermal(self) -> np.ndarray:
        if self._Np is None:
            return self._assemble(self.thermal_panel)
        return self._Np

    # contractions -----------------------------------------------------------

    def quadratic_rhs(self, n: np.ndarray) -> np.ndarray:
        """-n * (A n - A^T n)."""
        n = np.asarray(n, dtype=float)
        if self._A is not None:
            return -n * (self._A @ n - self._A.T @ n)

        out = np.empty_like(n)

        def fill(rows: slice):
            forward = self.weight_panel(rows, slice(None)) @ n
            backward = self.weight_panel(slice(None), rows).T @ n
            out[rows] = -n[rows] * (forward - backward)

        self._map(fill, list(_blocks(n.size, self.block)))
        return out

    def master_terms(self, n: np.ndarray, occ: np.ndarray) -> Dict[str, np.ndarray]:
        """
        Pieces of the linear equation with occupation factor `occ`:
        gain = occ * (G n + L^T n), emission = L occ, absorption = G^T occ.
        """
        n = np.asarray(n, dtype=float)
        occ = np.asarray(occ, dtype=float)
        if self._A is not None:
            A, Np = self._A, self.thermal
            G = A * Np
            L = A + G
            return {
                "gain": occ * (G @ n + L.T @ n),
                "emission": L @ occ,
                "absorption": G.T @ occ,
            }

        gain = np.empty_like(n)
        emission = np.empty_like(n)
        absorption = np.empty_like(n)

        def fill(rows: slice):
            A_r = self.weight_panel(rows, slice(None))
            G_r = A_r * self.thermal_panel(rows, slice(None))
            A_c = self.weight_panel(slice(None), rows)
            G_c = A_c * self.thermal_panel(slice(None), rows)
            gain[rows] = occ[rows] * (G_r @ n + (A_c + G_c).T @ n)
            emission[rows] = (A_r + G_r) @ occ
            absorption[rows] = G_c.T @ occ

        self._map(fill, list(_blocks(n.size, self.block)))
        return {"gain": gain, "emission": emission, "absorption": absorption}

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "form_factor": self.form_factor.label,
            "sigma_E": self.sigma_E,
            "beta": self.beta,
            "precompute": self.precompute,
        }


# master-equation forms --------------------------------------------------------


@dataclass(frozen=True)
class MasterEquationForm:
    """
    Occupation factor of the master equation. The linear form uses the
    reservoir's N(p) + 1; identification replaces N by the evolving n and,
    unless `unit_occupation` is kept, N + 1 by N.
    """

    reservoir: Optional[ReservoirSpec] = None
    identified: bool = False
    unit_occupation: bool = True

    def occupation(self, n: np.ndarray, grid: MomentumGrid) -> np.ndarray:
        if self.identified:
            base = np.asarray(n, dtype=float)
        else:
            if self.reservoir is None:
                raise ConfigurationError("the linear form needs a reservoir", "kinetics")
            base = self.reservoir.occupation_on(grid)
        return base + 1.0 if self.unit_occupation else base

    @property
    def label(self) -> str:
        if not self.identified:
            return "linear"
        return "identified (N := n, N+1 kept)" if self.unit_occupation else "quadratic"


def linear_form(reservoir: ReservoirSpec) -> MasterEquationForm:
    return MasterEquationForm(reservoir=reservoir)


def apply_identification(
    form: MasterEquationForm, retain_unit_occupation: bool = False
) -> MasterEquationForm:
    """N(p) := n_t(p), and N + 1 -> N unless retained. Idempotent."""
    if form.identified:
        return form
    return replace(form, identified=True, unit_occupation=retain_unit_occupation)


def evaluate_form(n: DensityField, form: MasterEquationForm, kernel: CollisionKernel) -> np.ndarray:
    """Right-hand side of `form` at state n, one rate per grid node."""
    if n.grid != kernel.grid:
        raise ConfigurationError("density and kernel grids differ", "kinetics")
    occ = form.occupation(n.values, n.grid)
    terms = kernel.master_terms(n.values, occ)
    return terms["gain"] - n.values * (terms["emission"] + terms["absorption"])


def linear_rhs(
    n: DensityField,
    reservoir: ReservoirSpec,
    params: PhysicalParams,
    sigma_E: Optional[float] = None,
    kernel: Optional[CollisionKernel] = None,
) -> np.ndarray:
    if kernel is None:
        kernel = CollisionKernel.for_reservoir(n.grid, reservoir, params, sigma_E)
    return evaluate_form(n, linear_form(reservoir), kernel)


def nonlinear_rhs(
    n: DensityField,
    model: DispersionModel,
    params: PhysicalParams,
    sigma_E: Optional[float] = None,
    kernel: Optional[CollisionKernel] = None,
) -> np.ndarray:
    """-2 pi int dk (|f|^2 delta_1 n(q) n(q-k) - |f|^2 delta_2 n(q) n(q+k))."""
    if kernel is None:
        kernel = CollisionKernel(n.grid, model, params, sigma_E)
    if n.grid != kernel.grid:
        raise ConfigurationError("density and kernel grids differ", "kinetics")
    return kernel.quadratic_rhs(n.values)


def rate_coefficients(
    n: DensityField, reservoir: ReservoirSpec, kernel: CollisionKernel
) -> Dict[str, np.ndarray]:
    """
    Per-node coefficients of n(q) in the linear equation: loss by emission
    (first kernel term) and loss by absorption (second kernel term), plus the
    gain that does not multiply n(q).
    """
    occ = reservoir.occupation_on(n.grid) + 1.0
    terms = kernel.master_terms(n.values, occ)
    return {
        "emission_loss": terms["emission"],
        "absorption_loss": terms["absorption"],
        "gain": terms["gain"],
    }


def total_rate(rhs: np.ndarray, grid: MomentumGrid) -> float:
    return float(np.sum(rhs) * grid.cell_volume)


# susceptibilities -------------------------------------------------------------


@dataclass(frozen=True)
class Susceptibility:
    """
    Per-node integrals S(p) = int dk |f|^2 (...) / (x - i0); the coupling
    constants of the evolution equation are (f|f) = -i S.
    """

    minus: np.ndarray
    plus: np.ndarray
    prescription: str
    epsilon_reg: float

    @property
    def coupling_minus(self) -> np.ndarray:
        return -1j * self.minus


def _resolvent(x: np.ndarray, eps: float, sigma: float, prescription: str) -> np.ndarray:
    """1/(x - i0) ~ x/(x^2 + eps^2) + i * (pi delta_sigma(x) | eps/(x^2 + eps^2))."""
    principal = x / (x * x + eps * eps)
    if prescription == "gaussian":
        absorptive = math.pi * mollified_delta(x, sigma)
    elif prescription == "lorentzian":
        absorptive = eps / (x * x + eps * eps)
    else:
        raise ConfigurationError(f"unknown -i0 prescription: {prescription}", "kinetics")
    return principal + 1j * absorptive


def susceptibility(
    n: DensityField,
    reservoir: ReservoirSpec,
    kernel: CollisionKernel,
    epsilon_reg: float,
    prescription: str = "gaussian",
) -> Susceptibility:
    if not epsilon_reg > 0:
        raise ConfigurationError("epsilon_reg must be positive", "kinetics")
    grid = n.grid
    occ = reservoir.occupation_on(grid) + 1.0
    size = grid.size
    minus = np.empty(size, dtype=complex)
    plus = np.empty(size, dtype=complex)

    def fill(rows: slice):
        x = kernel.energy_argument(rows, slice(None))
        weight = kernel.form_panel(rows, slice(None)) * _resolvent(
            x, epsilon_reg, kernel.sigma_E, prescription
        )
        _, _, diagonal = kernel._pairs(rows, slice(None))
        weight = np.where(diagonal, 0.0, weight)
        Np = kernel.thermal_panel(rows, slice(None))
        dv = grid.cell_volume
        minus[rows] = n.values[rows] * ((weight * (1.0 + Np)) @ occ) * dv
        plus[rows] = occ[rows] * ((weight * Np) @ n.values) * dv

    kernel._map(fill, list(_blocks(size, kernel.block)))
    return Susceptibility(minus=minus, plus=plus, prescription=prescription, epsilon_reg=epsilon_reg)


def delta_rate_integral(n: DensityField, reservoir: ReservoirSpec, kernel: CollisionKernel) -> np.ndarray:
    """int dk |f|^2 n(p) (N(p-k) + 1)(1 + n+) delta_sigma(x), per node."""
    terms = rate_coefficients(n, reservoir, kernel)
    return n.values * terms["emission_loss"] / TWO_PI
