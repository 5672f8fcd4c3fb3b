# tools/atom.py

"""
Mono-atomic 2D Hartree model with 3D Coulomb interaction.

The s-wave problem -u'' - u'/r + V u = lambda u is discretized by finite
volumes on a quadratically graded grid (dense near the nucleus) with a
Dirichlet wall at r_max. The -Z/r part of a potential is integrated exactly
over each cell so that the Coulomb singularity costs no accuracy.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg, special

from tools.errors import ConfigError, ConvergenceError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_NODES = 4000
DEFAULT_R_MAX = 40.0
DEFAULT_TOL = 1e-9
MAX_SCF_ITERATIONS = 500
_GAUSS_NODES = 6
_NEAR_NODES = 8
_ROW_BLOCK = 128
# orbital values below exp(-TAIL_EXPONENT) are round-off
TAIL_EXPONENT = 25.0


class BoundState(str, Enum):
    BOUND = "bound"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell centers r_i = r_max ((i + 1/2)/n)^2, faces r_max (i/n)^2"""
    nodes: np.ndarray
    faces: np.ndarray
    masses: np.ndarray
    r_max: float
    scheme: str = "quadratic"

    @property
    def n(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> float:
        """int 2 pi r f(r) dr"""
        return float(2.0 * math.pi * np.dot(self.masses, values))


@lru_cache(maxsize=16)
def make_grid(n: int = DEFAULT_NODES, r_max: float = DEFAULT_R_MAX) -> RadialGrid:
    if n < 8 or r_max <= 0.0:
        raise ConfigError(f"radial grid needs n >= 8 and r_max > 0, got n={n}, r_max={r_max}")
    s = np.arange(n + 1) / n
    faces = r_max * s * s
    nodes = r_max * ((np.arange(n) + 0.5) / n) ** 2
    masses = 0.5 * (faces[1:] ** 2 - faces[:-1] ** 2)
    return RadialGrid(nodes=nodes, faces=faces, masses=masses, r_max=float(r_max))


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """V(r) = samples(r) - charge / r"""
    samples: np.ndarray
    charge: float = 0.0

    def cell_integrals(self, grid: RadialGrid) -> np.ndarray:
        """int_cell V(r) r dr with the Coulomb part exact"""
        return self.samples * grid.masses - self.charge * np.diff(grid.faces)

    def values(self, grid: RadialGrid) -> np.ndarray:
        return self.samples - self.charge / grid.nodes


@dataclass(frozen=True)
class PseudoPotential:
    """Compactly supported bump -eta (1 - (r/R)^2)^2 on r < R"""
    eta: float = 4.0
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ConfigError("pseudo-potential radius must be positive")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        t = np.clip(1.0 - (r / self.radius) ** 2, 0.0, None)
        return -self.eta * t * t

    def fourier(self, k) -> np.ndarray:
        """int_{R^2} V(x) exp(-i k.x) dx = 2 pi int_0^R V(r) J0(k r) r dr"""
        k = np.asarray(k, dtype=float)
        nodes, weights = np.polynomial.legendre.leggauss(64)
        r = 0.5 * self.radius * (nodes + 1.0)
        w = 0.5 * self.radius * weights
        integrand = self(r) * r * w
        return 2.0 * math.pi * (special.j0(np.multiply.outer(k, r)) @ integrand)

    def to_dict(self) -> Dict:
        return {"eta": self.eta, "radius": self.radius}


def bump_pseudopotential(eta: float = 4.0, radius: float = 1.0) -> PseudoPotential:
    return PseudoPotential(eta=eta, radius=radius)


def ionization_family(eta: float, shift: float = 10.0, radius: float = 1.0) -> PseudoPotential:
    """Bump of strength eta - shift: repulsive below eta = shift"""
    return PseudoPotential(eta=eta - shift, radius=radius)


@dataclass(frozen=True, eq=False)
class RadialEigenpair:
    eigenvalues: np.ndarray
    orbital: np.ndarray
    state: BoundState

    @property
    def lowest(self) -> float:
        return float(self.eigenvalues[0])


def _stiffness(grid: RadialGrid):
    """Diagonal and off-diagonal of the finite-volume -u'' - u'/r operator (times r dr)"""
    r = grid.nodes
    flux = grid.faces[1:-1] / np.diff(r)
    diag = np.zeros(grid.n)
    diag[:-1] += flux
    diag[1:] += flux
    # Dirichlet wall at r_max
    diag[-1] += grid.faces[-1] / (grid.r_max - r[-1])
    return diag, -flux


def lowest_radial_eigenpair(V: RadialPotential, grid: RadialGrid, n_states: int = 2) -> RadialEigenpair:
    """Lowest eigenvalues and the positive normalized ground orbital of -u'' - u'/r + V u"""
    diag, off = _stiffness(grid)
    scale = 1.0 / np.sqrt(grid.masses)
    d = (diag + V.cell_integrals(grid)) * scale * scale
    e = off * scale[:-1] * scale[1:]
    values, vectors = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, n_states - 1))
    w = vectors[:, 0]
    u = w * scale / math.sqrt(2.0 * math.pi)
    if u[np.argmax(np.abs(u))] < 0.0:
        u = -u
    state = BoundState.BOUND if values[0] < 0.0 else BoundState.NONE
    return RadialEigenpair(eigenvalues=values, orbital=u, state=state)


def _near_cell(r: float, a: float, b: float, nodes: np.ndarray, weights: np.ndarray) -> float:
    """int_a^b kappa(r, s) s ds with the -2 ln|s - r| singularity integrated exactly"""
    s = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights
    ratio = ((r - s) / (r + s)) ** 2
    regular = 4.0 * special.ellipkm1(ratio) / (r + s) * s + 2.0 * np.log(np.abs(s - r))

    def antiderivative(x):
        return x * math.log(abs(x)) - x if x != 0.0 else 0.0

    log_part = antiderivative(b - r) - antiderivative(a - r)
    return float(w @ regular) - 2.0 * log_part


@lru_cache(maxsize=4)
def hartree_matrix(n: int, r_max: float) -> np.ndarray:
    """H[i, j] = int_cell_j kappa(r_i, s) s ds, kappa(r, s) = 4 K(m) / (r + s) the angular mean of 1/|x - y|"""
    grid = make_grid(n, r_max)
    r = grid.nodes
    far_nodes, far_weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
    near_nodes, near_weights = np.polynomial.legendre.leggauss(_NEAR_NODES)
    lo, hi = grid.faces[:-1], grid.faces[1:]
    s = 0.5 * (hi - lo)[:, None] * far_nodes[None, :] + 0.5 * (hi + lo)[:, None]
    w = 0.5 * (hi - lo)[:, None] * far_weights[None, :]

    matrix = np.empty((n, n))
    for start in range(0, n, _ROW_BLOCK):
        rows = r[start:start + _ROW_BLOCK, None, None]
        ratio = ((rows - s[None]) / (rows + s[None])) ** 2
        kernel = 4.0 * special.ellipkm1(ratio) / (rows + s[None]) * s[None]
        matrix[start:start + _ROW_BLOCK] = np.sum(kernel * w[None], axis=-1)
    for i in range(n):
        for j in range(max(i - 1, 0), min(i + 2, n)):
            matrix[i, j] = _near_cell(r[i], lo[j], hi[j], near_nodes, near_weights)
    logger.debug(f"⚛️ Hartree matrix assembled for n={n}, r_max={r_max}")
    return matrix


def radial_coulomb(rho: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """V(r_i) = int rho(s) kappa(r_i, s) s ds for a radial density sampled at cell centers"""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.nodes.shape:
        raise ConfigError("density does not match the radial grid")
    if np.min(rho) < -1e-12 * max(np.max(np.abs(rho)), 1e-300):
        raise SolverError("negative density")
    return hartree_matrix(grid.n, grid.r_max) @ rho


def trial_energy(u: np.ndarray, Vpp: PseudoPotential, grid: RadialGrid) -> float:
    """Hartree energy of a trial orbital, normalized first"""
    u = np.asarray(u, dtype=float)
    u = u / math.sqrt(grid.integrate(u * u))
    diag, off = _stiffness(grid)
    kinetic = 2.0 * math.pi * float(diag @ (u * u) + 2.0 * off @ (u[:-1] * u[1:]))
    external = RadialPotential(Vpp(grid.nodes), charge=1.0)
    potential = 2.0 * math.pi * float(external.cell_integrals(grid) @ (u * u))
    rho = u * u
    hartree = 0.5 * grid.integrate(radial_coulomb(rho, grid) * rho)
    return kinetic + potential + hartree


@dataclass(frozen=True, eq=False)
class AtomSolution:
    grid: RadialGrid
    pseudo: PseudoPotential
    mu: float
    v: np.ndarray
    VMF: np.ndarray
    VH: np.ndarray
    energy: float
    gap: float
    state: BoundState
    iterations: int
    residual: float
    energy_trace: List[float] = field(default_factory=list)

    @property
    def decay_rate(self) -> float:
        return math.sqrt(max(self.mu, 0.0))

    def second_moment(self) -> float:
        """m1 = int |x|^2 |v|^2"""
        return self.grid.integrate(self.grid.nodes ** 2 * self.v ** 2)

    def mean_field(self) -> RadialPotential:
        return RadialPotential(self.pseudo(self.grid.nodes) + self.VH, charge=1.0)

    def to_dict(self) -> Dict:
        return {
            "mu": self.mu,
            "I1": self.energy,
            "gap": self.gap,
            "m1": self.second_moment(),
            "state": self.state.value,
            "iterations": self.iterations,
            "residual": self.residual,
            "pseudo_potential": self.pseudo.to_dict(),
            "nodes": self.grid.n,
            "r_max": self.grid.r_max,
        }


def scf_atom(Vpp: PseudoPotential, grid: RadialGrid, mixing: float = 0.5, tol: float = DEFAULT_TOL,
             max_iter: int = MAX_SCF_ITERATIONS) -> AtomSolution:
    """Self-consistent ground state of -Delta - 1/r + Vpp + |v|^2 * 1/|.| with linear density mixing"""
    if not 0.0 < mixing <= 1.0:
        raise ConfigError(f"mixing must lie in (0, 1], got {mixing}")

    r = grid.nodes
    pseudo = Vpp(r)
    rho = 2.0 / math.pi * np.exp(-2.0 * r)
    rho /= grid.integrate(rho)
    alpha = mixing
    previous = math.inf
    rises = 0
    trace: List[float] = []

    for iteration in range(1, max_iter + 1):
        VH = radial_coulomb(rho, grid)
        pair = lowest_radial_eigenpair(RadialPotential(pseudo + VH, charge=1.0), grid)
        if pair.state is BoundState.NONE:
            logger.warning(f"⚛️ No bound state at iteration {iteration} (lowest eigenvalue {pair.lowest:.6g})")
            return _solution(grid, Vpp, pair, VH, rho, iteration, math.nan, trace)

        rho_out = pair.orbital ** 2
        delta = rho_out - rho
        residual = math.sqrt(grid.integrate(delta * delta))
        energy = pair.lowest - 0.5 * grid.integrate(VH * rho_out)
        trace.append(energy)
        logger.info(f"⚛️ iter {iteration}: lambda={pair.lowest:.12g}, residual={residual:.3e}, energy={energy:.12g}")

        if residual < tol:
            solution = _solution(grid, Vpp, pair, VH, rho_out, iteration, residual, trace)
            if grid.r_max < 30.0 / max(solution.decay_rate, 1e-12):
                logger.warning(f"⚛️ r_max={grid.r_max} is short for decay rate {solution.decay_rate:.4g}")
            return solution

        rises = rises + 1 if residual > previous else 0
        if rises >= 3 and alpha > 0.05:
            alpha = max(0.5 * alpha, 0.05)
            rises = 0
            logger.info(f"⚛️ Residual stagnating, mixing reduced to {alpha}")
        previous = residual
        rho = rho + alpha * delta

    raise ConvergenceError(f"atom SCF did not converge in {max_iter} iterations (residual {previous:.3e})")


def _solution(grid, Vpp, pair, VH, rho, iterations, residual, trace) -> AtomSolution:
    lam = pair.lowest
    second = float(pair.eigenvalues[1]) if len(pair.eigenvalues) > 1 else 0.0
    VMF = Vpp(grid.nodes) + VH - 1.0 / grid.nodes
    energy = lam - 0.5 * grid.integrate(VH * rho)
    return AtomSolution(
        grid=grid,
        pseudo=Vpp,
        mu=-lam,
        v=pair.orbital,
        VMF=VMF,
        VH=VH,
        energy=energy,
        gap=min(second, 0.0) - lam,
        state=pair.state,
        iterations=iterations,
        residual=residual,
        energy_trace=list(trace),
    )


# =============================================================================
# CHECKS
# =============================================================================

@dataclass(frozen=True)
class DecayReport:
    ratio_max: float
    ratio_min: float
    spread: float
    slope: float
    expected_slope: float
    passed: bool

    def to_dict(self) -> Dict:
        return {
            "ratio_max": self.ratio_max,
            "ratio_min": self.ratio_min,
            "spread": self.spread,
            "decay_slope": self.slope,
            "sqrt_mu": self.expected_slope,
            "passed": self.passed,
        }


def decay_check(sol: AtomSolution, max_spread: float = 50.0) -> DecayReport:
    """Two-sided envelope v(r) (1 + sqrt r) exp(sqrt(mu) r) on [2, 0.7 r_max], stopping where v drops below e^-TAIL_EXPONENT"""
    r = sol.grid.nodes
    rate = sol.decay_rate
    end = min(0.7 * sol.grid.r_max, TAIL_EXPONENT / rate) if rate > 0.0 else 0.7 * sol.grid.r_max
    window = (r >= 2.0) & (r <= end)
    v = sol.v[window]
    rw = r[window]
    if np.any(v <= 0.0):
        return DecayReport(0.0, 0.0, math.inf, math.nan, rate, False)
    ratio = v * (1.0 + np.sqrt(rw)) * np.exp(rate * rw)
    slope = float(np.polyfit(rw, -np.log(v * (1.0 + np.sqrt(rw))), 1)[0])
    spread = float(ratio.max() / ratio.min())
    logger.info(f"📈 Decay envelope spread={spread:.4g}, slope={slope:.6g} vs sqrt(mu)={rate:.6g}")
    return DecayReport(float(ratio.max()), float(ratio.min()), spread, slope, rate, spread <= max_spread)


class TailKind(str, Enum):
    QUADRUPOLAR = "quadrupolar"
    COULOMBIC = "coulombic"
    OTHER = "other"


@dataclass(frozen=True)
class FarFieldReport:
    m1: float
    radius: float
    ratio: float
    tail_exponent: float
    tail: TailKind

    def to_dict(self) -> Dict:
        return {
            "m1": self.m1,
            "radius": self.radius,
            "ratio": self.ratio,
            "tail_exponent": self.tail_exponent,
            "tail": self.tail.value,
        }


def classify_tail(r: np.ndarray, V: np.ndarray) -> tuple:
    """Power-law exponent of |V| on the given samples and the matching tail kind"""
    exponent = float(np.polyfit(np.log(r), np.log(np.abs(V)), 1)[0])
    if abs(exponent + 3.0) < 0.3:
        return exponent, TailKind.QUADRUPOLAR
    if abs(exponent + 1.0) < 0.3:
        return exponent, TailKind.COULOMBIC
    return exponent, TailKind.OTHER


def vmf_far_field(sol: AtomSolution, potential: Optional[np.ndarray] = None) -> FarFieldReport:
    """4 r^3 V^MF(r) / m1 at r = r_max / 2, and the power law of the far tail"""
    grid = sol.grid
    V = sol.VMF if potential is None else np.asarray(potential, dtype=float)
    m1 = sol.second_moment()
    index = int(np.searchsorted(grid.nodes, 0.5 * grid.r_max))
    radius = float(grid.nodes[index])
    ratio = 4.0 * radius ** 3 * float(V[index]) / m1
    window = (grid.nodes >= 0.3 * grid.r_max) & (grid.nodes <= 0.6 * grid.r_max)
    exponent, tail = classify_tail(grid.nodes[window], V[window])
    logger.info(f"📈 Far field ratio={ratio:.6g}, tail exponent={exponent:.4g} ({tail.value})")
    return FarFieldReport(m1=m1, radius=radius, ratio=ratio, tail_exponent=exponent, tail=tail)


@dataclass(frozen=True)
class IonizationReport:
    threshold: float
    lower: float
    upper: float
    iterations: int

    def to_dict(self) -> Dict:
        return {"threshold": self.threshold, "lower": self.lower, "upper": self.upper, "iterations": self.iterations}


def ionization_check(reference: AtomSolution, family: Callable[[float], PseudoPotential] = ionization_family,
                     lower: float = 0.0, upper: float = 40.0, tol: float = 1e-4) -> IonizationReport:
    """Bisection on eta for the onset of a bound state of -Delta - 1/r + V_H[reference] + family(eta)"""
    grid = reference.grid

    def bound(eta: float) -> bool:
        V = RadialPotential(family(eta)(grid.nodes) + reference.VH, charge=1.0)
        return lowest_radial_eigenpair(V, grid, n_states=1).state is BoundState.BOUND

    if bound(lower) or not bound(upper):
        raise SolverError(f"ionization threshold not bracketed by [{lower}, {upper}]")
    iterations = 0
    while upper - lower > tol:
        middle = 0.5 * (lower + upper)
        if bound(middle):
            upper = middle
        else:
            lower = middle
        iterations += 1
    logger.info(f"⚛️ Ionization threshold in [{lower:.6g}, {upper:.6g}] after {iterations} bisections")
    return IonizationReport(threshold=0.5 * (lower + upper), lower=lower, upper=upper, iterations=iterations)


@dataclass(frozen=True)
class ConvergenceStudy:
    sizes: List[int]
    values: List[float]
    order: float
    extrapolated: float


def grid_convergence(solve: Callable[[int], float], sizes: Sequence[int]) -> ConvergenceStudy:
    """Observed order and Richardson limit from three solves at sizes n, 2n, 4n"""
    sizes = list(sizes)
    if len(sizes) != 3 or sizes[1] != 2 * sizes[0] or sizes[2] != 2 * sizes[1]:
        raise ConfigError("grid convergence needs three sizes n, 2n, 4n")
    values = [float(solve(n)) for n in sizes]
    d1 = values[0] - values[1]
    d2 = values[1] - values[2]
    if d2 == 0.0 or d1 == 0.0:
        return ConvergenceStudy(sizes, values, math.inf, values[-1])
    order = math.log2(abs(d1 / d2))
    extrapolated = values[2] - d2 / (2.0 ** order - 1.0)
    logger.info(f"📈 Grid convergence: order={order:.3f}, limit={extrapolated:.12g}")
    return ConvergenceStudy(sizes, values, order, extrapolated)
