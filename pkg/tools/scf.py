# tools/scf.py

"""
Periodic reduced Hartree-Fock self-consistent field on a motif lattice.

The mean-field potential is
    V^MF = s (V_ext + q rho *_L W_L) + shift
with s the potential scale. rho integrates to N/q over one cell, so
rho carries one spin channel and q counts the spin states.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, special

from tools.atom import AtomSolution, PseudoPotential, bump_pseudopotential
from tools.coulomb2d import (
    PeriodicKernel,
    build_kernel,
    fourier_coefficients,
    hartree_energy,
    periodic_hartree,
)
from tools.errors import Bands2DError, ConfigError, InsufficientBandsError, SolverError
from tools.fourier_grid import FourierField
from tools.lattice2d import BravaisLattice, MotifLattice, k_path, monkhorst_pack, scaled, special_points
from tools.planewave import band_structure, density_from_states, fft_shape, parallel_map, solve_fiber

logger = logging.getLogger(__name__)

OCCUPATION_FLOOR = 1e-8
ELECTRON_TOL = 1e-10


class SCFConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    L: float = Field(2.0, gt=0.0)
    ecut: float = Field(150.0, gt=0.0)
    kgrid: int = Field(9, ge=3)
    smearing: float = Field(1e-2, gt=0.0)
    q: int = Field(2, ge=1)
    n_electrons: float = Field(2.0, gt=0.0)
    mixing: float = Field(0.5, gt=0.0, le=1.0)
    scheme: Literal["linear", "anderson"] = "linear"
    anderson_history: int = Field(5, ge=1)
    tol: float = Field(1e-6, gt=0.0)
    max_iter: int = Field(60, ge=1)
    n_bands: int = Field(6, ge=1)
    eta: float = 4.0
    radius: float = Field(1.0, gt=0.0)
    potential_scale: float = Field(1.0, ge=0.0)
    potential_shift: float = 0.0
    atom_guess: bool = True

    @property
    def target(self) -> float:
        """Electrons per cell and spin state, N/q"""
        return self.n_electrons / self.q

    def pseudo(self) -> PseudoPotential:
        return bump_pseudopotential(self.eta, self.radius)


# =============================================================================
# EXTERNAL POTENTIAL AND OCCUPATIONS
# =============================================================================

def structure_factor(m: MotifLattice, L: float, vectors: np.ndarray) -> np.ndarray:
    """S(v) = sum_r exp(-i v . L r)"""
    phases = np.tensordot(vectors, L * m.shifts.T, axes=([-1], [0]))
    return np.sum(np.exp(-1j * phases), axis=-1)


def external_potential(m: MotifLattice, L: float, kern: PeriodicKernel, Vpp: Optional[PseudoPotential],
                       shape) -> FourierField:
    """-sum_r W_L(. - L r) + sum_r sum_u Vpp(. - L(u + r)) in plain coefficients"""
    lattice = m.bravais.scaled(L)
    if abs(lattice.cell_area - kern.lattice.cell_area) > 1e-9 * lattice.cell_area:
        raise ConfigError("kernel and motif lattice differ")

    def coefficients(vectors):
        S = structure_factor(m, L, vectors)
        values = -fourier_coefficients(kern, vectors) * S
        if Vpp is not None:
            values = values + Vpp.fourier(np.linalg.norm(vectors, axis=-1)) * S / lattice.cell_area
        return values

    return FourierField.from_function(lattice, shape, coefficients)


def occupations(eigenvalues, fermi: float, smearing: float) -> np.ndarray:
    """f = erfc((lambda - eps) / sigma) / 2"""
    if smearing <= 0.0:
        raise ConfigError("smearing must be positive")
    return 0.5 * special.erfc((np.asarray(eigenvalues, dtype=float) - fermi) / smearing)


def fermi_level(eigenvalues: np.ndarray, weights: np.ndarray, target: float, smearing: float) -> float:
    """eps with sum_k w_k sum_n f_nk = target; eigenvalues has shape (n_k, n_bands)"""
    eigenvalues = np.atleast_2d(np.asarray(eigenvalues, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if target <= 0.0:
        raise ConfigError("electron count must be positive")

    def excess(eps):
        return float(weights @ occupations(eigenvalues, eps, smearing).sum(axis=1)) - target

    lo = float(eigenvalues.min()) - 40.0 * smearing
    hi = float(eigenvalues.max()) + 40.0 * smearing
    if excess(lo) > 0.0 or excess(hi) < 0.0:
        raise InsufficientBandsError(f"{eigenvalues.shape[1]} band(s) cannot hold {target} electrons per spin")
    try:
        eps = optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except ValueError as e:
        raise SolverError(f"Fermi level not bracketed: {e}") from e

    top = occupations(eigenvalues[:, -1], eps, smearing).max()
    if top >= OCCUPATION_FLOOR:
        raise InsufficientBandsError(f"top band occupation {top:.3g} at the Fermi level; compute more bands")
    if abs(excess(eps)) > ELECTRON_TOL * max(1.0, target):
        logger.warning(f"🌀 Electron count off by {excess(eps):.3g} at the Fermi level")
    return float(eps)


# =============================================================================
# MIXING
# =============================================================================

class LinearMixer:
    def __init__(self, alpha: float):
        self.alpha = alpha

    def update(self, x_in: np.ndarray, x_out: np.ndarray) -> np.ndarray:
        return x_in + self.alpha * (x_out - x_in)


class AndersonMixer:
    """Anderson acceleration of the fixed point x = g(x) over the last few iterates"""

    def __init__(self, alpha: float, history: int = 5, regularization: float = 1e-10):
        self.alpha = alpha
        self.history = history
        self.regularization = regularization
        self._x: List[np.ndarray] = []
        self._r: List[np.ndarray] = []

    def update(self, x_in: np.ndarray, x_out: np.ndarray) -> np.ndarray:
        x = x_in.ravel()
        r = (x_out - x_in).ravel()
        self._x.append(x.copy())
        self._r.append(r.copy())
        if len(self._x) > self.history + 1:
            self._x.pop(0)
            self._r.pop(0)
        if len(self._x) < 2:
            return (x + self.alpha * r).reshape(x_in.shape)

        dX = np.column_stack([self._x[i + 1] - self._x[i] for i in range(len(self._x) - 1)])
        dR = np.column_stack([self._r[i + 1] - self._r[i] for i in range(len(self._r) - 1)])
        gram = dR.conj().T @ dR
        gram += self.regularization * max(np.trace(gram).real, 1e-300) * np.eye(gram.shape[0])
        beta = np.linalg.solve(gram, dR.conj().T @ r)
        x_next = x + self.alpha * r - (dX + self.alpha * dR) @ beta
        return x_next.reshape(x_in.shape)


def make_mixer(config: SCFConfig):
    if config.scheme == "anderson":
        return AndersonMixer(config.mixing, config.anderson_history)
    return LinearMixer(config.mixing)


# =============================================================================
# INITIAL GUESS
# =============================================================================

def initial_density(m: MotifLattice, L: float, target: float, shape, atom: Optional[AtomSolution] = None) -> FourierField:
    """Superposition of atomic densities |v(. - L r)|^2 scaled to target, else uniform"""
    lattice = m.bravais.scaled(L)
    if atom is None:
        return FourierField.constant(lattice, shape, target / lattice.cell_area)

    grid = atom.grid
    rho = atom.v ** 2
    per_site = target / m.n_sites

    def coefficients(vectors):
        k = np.linalg.norm(vectors, axis=-1)
        transform = 2.0 * math.pi * (special.j0(np.multiply.outer(k, grid.nodes)) @ (grid.masses * rho))
        return per_site * structure_factor(m, L, vectors) * transform / lattice.cell_area

    density = FourierField.from_function(lattice, shape, coefficients)
    # exact electron count despite the radial truncation
    density.coefficients[0, 0] = target / lattice.cell_area
    return density


# =============================================================================
# SCF LOOP
# =============================================================================

@dataclass(frozen=True, eq=False)
class SCFState:
    config: SCFConfig
    motif: MotifLattice
    lattice: BravaisLattice
    kernel: PeriodicKernel
    external: FourierField
    potential: FourierField
    density: FourierField
    density_in: FourierField
    fermi_level: float
    kpoints: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    occupations: np.ndarray
    kinetic: np.ndarray
    converged: bool
    iterations: int
    residuals: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)

    def electron_count(self) -> float:
        return self.density.mean() * self.lattice.cell_area

    def summary(self) -> Dict:
        return {
            "L": self.config.L,
            "converged": self.converged,
            "iterations": self.iterations,
            "fermi_level": self.fermi_level,
            "electron_count": self.electron_count(),
            "final_residual": self.residuals[-1] if self.residuals else None,
            "residuals": list(self.residuals),
            "energies": list(self.energies),
            "kgrid": self.config.kgrid,
            "ecut": self.config.ecut,
            "smearing": self.config.smearing,
            "fft_shape": list(self.density.shape),
        }


def mean_field(config: SCFConfig, kern: PeriodicKernel, external: FourierField, rho: FourierField) -> FourierField:
    hartree = periodic_hartree(kern, rho)
    potential = config.potential_scale * (external + config.q * hartree)
    return potential.shifted(config.potential_shift)


def scf_loop(m: MotifLattice, config: SCFConfig, atom: Optional[AtomSolution] = None, threads: int = 1,
             kern: Optional[PeriodicKernel] = None) -> SCFState:
    """Fixed-point iteration rho -> density of 1(H^MF[rho] <= eps) with density mixing"""
    L = config.L
    lattice = m.bravais.scaled(L)
    kern = kern if kern is not None else build_kernel(m.bravais, L)
    kpoints, weights = monkhorst_pack(lattice, config.kgrid)
    k_extent = float(np.max(np.linalg.norm(kpoints, axis=1)))
    shape = fft_shape(lattice, config.ecut, k_extent)
    external = external_potential(m, L, kern, config.pseudo(), shape)
    fixed_potential = config.potential_scale == 0.0
    guess = atom if (config.atom_guess and not fixed_potential) else None
    rho = initial_density(m, L, config.target, shape, guess)
    mixer = make_mixer(config)
    logger.info(f"🌀 SCF start: L={L}, Ecut={config.ecut}, k-grid {config.kgrid}x{config.kgrid}, FFT {shape}")

    residuals: List[float] = []
    energies: List[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        rho_in = rho
        potential = mean_field(config, kern, external, rho_in)

        def solve(k):
            return solve_fiber(lattice, potential, k, config.ecut, config.n_bands)

        spectra = parallel_map(solve, list(kpoints), threads)
        if any(len(s.eigenvalues) < config.n_bands for s in spectra):
            raise InsufficientBandsError("plane-wave basis smaller than the requested band count; raise Ecut")
        eigenvalues = np.array([s.eigenvalues for s in spectra])
        eps = fermi_level(eigenvalues, weights, config.target, config.smearing)
        occ = occupations(eigenvalues, eps, config.smearing)
        kinetic = np.array([
            np.sum(np.abs(s.eigenvectors) ** 2 * s.basis.kinetic[:, None], axis=0) for s in spectra
        ])
        rho_out = density_from_states(spectra, occ, weights, shape, lattice)

        residual = (rho_out - rho).l2_norm() / config.target
        residuals.append(residual)
        band_energy = _band_route(config, kern, weights, eigenvalues, occ, rho, rho_out)
        energies.append(band_energy)
        logger.info(f"🌀 iter {iteration}: residual={residual:.3e}, eps={eps:.10g}, energy={band_energy:.10g}")

        if residual < config.tol or fixed_potential:
            converged = True
            break
        next_rho = mixer.update(rho.coefficients, rho_out.coefficients)
        rho = FourierField(lattice, next_rho)

    if not converged:
        logger.warning(f"🌀 SCF not converged after {config.max_iter} iterations (residual {residuals[-1]:.3e})")
    return SCFState(
        config=config,
        motif=m,
        lattice=lattice,
        kernel=kern,
        external=external,
        potential=potential,
        density=rho_out,
        density_in=rho_in,
        fermi_level=eps,
        kpoints=kpoints,
        weights=weights,
        eigenvalues=eigenvalues,
        occupations=occ,
        kinetic=kinetic,
        converged=converged,
        iterations=iteration,
        residuals=residuals,
        energies=energies,
    )


def _band_route(config, kern, weights, eigenvalues, occ, rho_in, rho_out) -> float:
    s = config.potential_scale
    band = float(weights @ np.sum(occ * eigenvalues, axis=1))
    return (band - config.potential_shift * config.target
            - s * config.q * hartree_energy(kern, rho_in, rho_out)
            + 0.5 * s * config.q * hartree_energy(kern, rho_out))


@dataclass(frozen=True)
class EnergyReport:
    kinetic: float
    external: float
    hartree: float
    total: float
    band_route: float

    @property
    def discrepancy(self) -> float:
        return abs(self.total - self.band_route)

    def to_dict(self) -> Dict:
        return {
            "kinetic": self.kinetic,
            "external": self.external,
            "hartree": self.hartree,
            "total": self.total,
            "band_route": self.band_route,
            "discrepancy": self.discrepancy,
        }


def rhf_energy(state: SCFState) -> EnergyReport:
    """Energy per spin state: kinetic + int V_ext rho + (q/2) D(rho, rho), with the band-energy cross-check"""
    if not state.converged:
        raise SolverError("energy requested for an unconverged SCF state")
    config = state.config
    s = config.potential_scale
    rho = state.density
    kinetic = float(state.weights @ np.sum(state.occupations * state.kinetic, axis=1))
    external = s * float(state.lattice.cell_area * np.sum(state.external.coefficients * np.conj(rho.coefficients)).real)
    hartree = 0.5 * s * config.q * hartree_energy(state.kernel, rho)
    total = kinetic + external + hartree
    band = _band_route(config, state.kernel, state.weights, state.eigenvalues, state.occupations,
                       state.density_in, rho)
    report = EnergyReport(kinetic, external, hartree, total, band)
    if report.discrepancy > 1e-6 * max(1.0, abs(total)):
        logger.warning(f"🌀 Energy routes disagree by {report.discrepancy:.3e}")
    return report


# =============================================================================
# PHASES AND WEAK CONTRAST
# =============================================================================

class Phase(str, Enum):
    METAL = "metal"
    SEMIMETAL = "dirac-semi-metal"
    INSULATOR = "insulator-like"


def classify(fermi: float, cone: float, overlap: float, gap_k: float, smearing: float) -> Phase:
    if overlap < 0.0 and fermi < cone:
        return Phase.METAL
    if overlap >= 0.0 and gap_k <= 3.0 * smearing and abs(fermi - cone) <= 3.0 * smearing:
        return Phase.SEMIMETAL
    return Phase.INSULATOR


@dataclass(frozen=True)
class PhaseReport:
    L: float
    phase: Optional[Phase]
    cone_energy: float
    fermi_level: float
    min_direct_gap: float
    overlap: float
    gap_k: float
    converged: bool
    error: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "L": self.L,
            "phase": self.phase.value if self.phase else None,
            "cone_energy": self.cone_energy,
            "fermi_level": self.fermi_level,
            "min_direct_gap": self.min_direct_gap,
            "overlap": self.overlap,
            "gap_k": self.gap_k,
            "converged": self.converged,
            "error": self.error,
        }


def band_indicators(bands: np.ndarray, kpoints: np.ndarray, K: np.ndarray, k_index: int, exclusion: float = 0.05):
    """Cone energy, overlap indicator, gap at K and minimal direct gap of bands 1 and 2"""
    lower, upper = bands[:, 0], bands[:, 1]
    cone = 0.5 * (lower[k_index] + upper[k_index])
    away = np.linalg.norm(kpoints - K, axis=1) >= exclusion * np.linalg.norm(K)
    overlap = float(upper.min() - lower[away].max())
    gap_k = float(upper[k_index] - lower[k_index])
    return float(cone), overlap, gap_k, float(np.min(upper - lower))


def phase_point(state: SCFState, samples_per_segment: int = 30, threads: int = 1) -> PhaseReport:
    config = state.config
    motif = scaled(state.motif, config.L)
    path = k_path(motif, ["Γ", "K", "M", "Γ"], samples_per_segment)
    bands = band_structure(state.lattice, state.potential, path, config.ecut, max(3, min(config.n_bands, 4)), threads)
    k_index = path.waypoint_indices[1]
    cone, overlap, gap_k, min_gap = band_indicators(bands.eigenvalues, path.kpoints, path.kpoints[k_index], k_index)
    phase = classify(state.fermi_level, cone, overlap, gap_k, config.smearing)
    logger.info(f"📈 L={config.L}: {phase.value}, eps={state.fermi_level:.6g}, lambda={cone:.6g}, overlap={overlap:.4g}")
    return PhaseReport(config.L, phase, cone, state.fermi_level, min_gap, overlap, gap_k, state.converged)


def phase_scan(m: MotifLattice, L_values: Sequence[float], template: SCFConfig, atom: Optional[AtomSolution] = None,
               samples_per_segment: int = 30, threads: int = 1) -> List[PhaseReport]:
    """Converge the SCF and classify the band topology at each scale; failures are recorded and skipped"""
    reports = []
    for L in L_values:
        config = template.model_copy(update={"L": float(L)})
        try:
            state = scf_loop(m, config, atom=atom, threads=threads)
            reports.append(phase_point(state, samples_per_segment, threads))
        except Bands2DError as e:
            logger.error(f"❌ Phase scan failed at L={L}: {e}")
            nan = math.nan
            reports.append(PhaseReport(float(L), None, nan, nan, nan, nan, nan, False, str(e)))
    return reports


class Placement(str, Enum):
    TRIPLE = "triple"
    BANDS_1_2 = "bands-1-2"
    BANDS_2_3 = "bands-2-3"
    NONE = "none"


@dataclass(frozen=True)
class WeakContrastReport:
    c11: float
    placement: Placement
    eigenvalues_at_K: List[float]

    def to_dict(self) -> Dict:
        return {"c11": self.c11, "placement": self.placement.value, "eigenvalues_at_K": self.eigenvalues_at_K}


def first_shell_potential(lattice: BravaisLattice, c: float, shape) -> FourierField:
    """c at +-(v1 + v2), -c at +-v1 and +-v2: a first-shell potential with c_{1,1} = c"""
    coefficients = np.zeros(shape, dtype=complex)
    n1, n2 = shape
    for (a, b), value in {(1, 1): c, (1, 0): -c, (0, 1): -c}.items():
        coefficients[a % n1, b % n2] = value
        coefficients[-a % n1, -b % n2] = value
    return FourierField(lattice, coefficients)


def weak_contrast_check(potential: FourierField, ecut: float, tol: float = 1e-7) -> WeakContrastReport:
    """Sign of the (1, 1) coefficient and the band pair touching at K"""
    lattice = potential.lattice
    c11 = float(potential.coefficient(1, 1).real)
    K = special_points(lattice)["K"]
    values = solve_fiber(lattice, potential, K, ecut, 3, vectors=False).eigenvalues
    scale = tol * max(1.0, float(np.max(np.abs(values))))
    low, high = values[1] - values[0] <= scale, values[2] - values[1] <= scale
    if low and high:
        placement = Placement.TRIPLE
    elif low:
        placement = Placement.BANDS_1_2
    elif high:
        placement = Placement.BANDS_2_3
    else:
        placement = Placement.NONE
    logger.info(f"📈 Weak contrast: c11={c11:.6g}, touching {placement.value}")
    return WeakContrastReport(c11, placement, [float(v) for v in values])
