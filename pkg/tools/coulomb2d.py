# tools/coulomb2d.py

"""
Periodized 3D Coulomb interaction restricted to the plane.

W_L solves the periodic problem whose Fourier expansion is
    W_L(x) = M/L + (2 pi / |cell_L|) sum_{v != 0} exp(i v.x) / |v|
in plain coefficients, normalized so that min W_L = 0. Everything is
computed once for the unit lattice and dilated: W_L(x) = W_1(x/L) / L.

Three independent evaluators are provided:
  * Ewald-accelerated Fourier sum (default of evaluate_fourier)
  * plain isotropic Fourier truncation (evaluate_fourier mode="plain")
  * charge-neutral Madelung real-space sum (evaluate_madelung)
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, special
from scipy.spatial import Voronoi

from tools.errors import KernelSingularityError, LatticeError
from tools.fourier_grid import FourierField
from tools.lattice2d import TWO_PI, BravaisLattice

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
SINGULARITY_TOL = 1e-9
# erfc(6) ~ 2e-17
EWALD_REACH = 6.0
MIN_GRID = 64
_CHUNK = 4096

_kernel_cache: Dict[Tuple, "_UnitKernel"] = {}
_kernel_lock = threading.Lock()


def _reduce_to_cell(lattice: BravaisLattice, points: np.ndarray) -> np.ndarray:
    """Translate points into the parallelogram with fractional coordinates in [-1/2, 1/2)"""
    frac = lattice.to_fractional(points)
    frac = frac - np.floor(frac + 0.5)
    return lattice.to_cartesian(frac)


def _nearest_lattice_distance(lattice: BravaisLattice, reduced: np.ndarray) -> np.ndarray:
    neighbors = lattice.to_cartesian(np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]))
    dist = np.linalg.norm(reduced[:, None, :] - neighbors[None, :, :], axis=-1)
    return dist.min(axis=1)


class _EwaldSum:
    """Zero-mean part of W_1 by Ewald splitting at parameter alpha"""

    def __init__(self, lattice: BravaisLattice):
        self.lattice = lattice
        self.alpha = 2.0 / math.sqrt(lattice.cell_area)
        r_cut = EWALD_REACH / self.alpha
        diameter = np.linalg.norm(lattice.u1) + np.linalg.norm(lattice.u2)
        self.cells = lattice.to_cartesian(lattice.cells_within(r_cut + diameter))
        miller = lattice.reciprocal_within(2.0 * EWALD_REACH * self.alpha, include_zero=False)
        self.vectors = lattice.reciprocal_vectors(miller)
        norms = np.linalg.norm(self.vectors, axis=1)
        self.weights = TWO_PI * special.erfc(norms / (2.0 * self.alpha)) / (lattice.cell_area * norms)
        self.background = 2.0 * SQRT_PI / (self.alpha * lattice.cell_area)

    def zero_mean(self, points: np.ndarray) -> np.ndarray:
        """W_1 - M at points already reduced to the home cell"""
        out = np.empty(len(points))
        for start in range(0, len(points), _CHUNK):
            y = points[start:start + _CHUNK]
            dist = np.linalg.norm(y[:, None, :] - self.cells[None, :, :], axis=-1)
            real = np.sum(special.erfc(self.alpha * dist) / dist, axis=1)
            recip = np.cos(y @ self.vectors.T) @ self.weights
            out[start:start + _CHUNK] = real + recip - self.background
        return out

    def regular_at_origin(self) -> float:
        """lim_{y -> 0} (W_1(y) - M - 1/|y|)"""
        norms = np.linalg.norm(self.cells, axis=1)
        others = norms[norms > 1e-12]
        return float(np.sum(special.erfc(self.alpha * others) / others)
                     - 2.0 * self.alpha / SQRT_PI + np.sum(self.weights) - self.background)


class _MadelungSum:
    """sum_u f(y - u) with f(y) = 1/|y| - (1/|cell|) int_cell dz / |y - z| over the Wigner-Seitz cell"""

    LEVELS = 4

    def __init__(self, lattice: BravaisLattice):
        self.lattice = lattice
        self.polygon = wigner_seitz_cell(lattice)

    def cell_potential(self, y: np.ndarray) -> np.ndarray:
        """int_cell dz / |y - z| in closed form, edge by edge (divergence theorem)"""
        total = np.zeros(len(y))
        corners = self.polygon
        for start, end in zip(corners, np.roll(corners, -1, axis=0)):
            edge = end - start
            length = np.linalg.norm(edge)
            tangent = edge / length
            normal = np.array([tangent[1], -tangent[0]])
            h = (start - y) @ normal
            s_start = (start - y) @ tangent
            s_end = (end - y) @ tangent
            abs_h = np.abs(h)
            safe = np.where(abs_h > 1e-300, abs_h, 1.0)
            term = h * (np.arcsinh(s_end / safe) - np.arcsinh(s_start / safe))
            total += np.where(abs_h > 1e-300, term, 0.0)
        return total

    def evaluate(self, y: np.ndarray, shells: int) -> np.ndarray:
        """Block sums over |i|, |j| <= n, 2n, 4n, 8n extrapolated in 1/(n + 1/2)"""
        top = shells * 2 ** (self.LEVELS - 1)
        idx = np.arange(-top, top + 1)
        I, J = np.meshgrid(idx, idx, indexing="ij")
        cells = np.column_stack([I.ravel(), J.ravel()])
        ring = np.max(np.abs(cells), axis=1)
        shifts = self.lattice.to_cartesian(cells)
        sizes = [shells * 2 ** level for level in range(self.LEVELS)]
        xs = np.array([1.0 / (n + 0.5) for n in sizes])

        out = np.empty(len(y))
        for p, point in enumerate(y):
            rel = point[None, :] - shifts
            terms = 1.0 / np.linalg.norm(rel, axis=1) - self.cell_potential(rel) / self.lattice.cell_area
            partial = np.array([terms[ring <= n].sum() for n in sizes])
            out[p] = np.polyfit(xs, partial, len(sizes) - 1)[-1]
        return out


def wigner_seitz_cell(lattice: BravaisLattice) -> np.ndarray:
    """Counter-clockwise corners of the Wigner-Seitz cell around the origin"""
    radius = 3.0 * max(np.linalg.norm(lattice.u1), np.linalg.norm(lattice.u2))
    cells = lattice.cells_within(radius)
    points = lattice.to_cartesian(cells)
    origin = int(np.argmin(np.linalg.norm(points, axis=1)))
    voronoi = Voronoi(points)
    region = voronoi.regions[voronoi.point_region[origin]]
    if -1 in region or not region:
        raise LatticeError("Wigner-Seitz cell is unbounded")
    corners = voronoi.vertices[region]
    order = np.argsort(np.arctan2(corners[:, 1], corners[:, 0]))
    return corners[order]


@dataclass(frozen=True, eq=False)
class _UnitKernel:
    lattice: BravaisLattice
    ewald: _EwaldSum
    madelung: _MadelungSum
    M: float
    M_prime: float
    a: float
    minimizer: np.ndarray


def _fractional_min(ewald: _EwaldSum, grid: int) -> Tuple[float, np.ndarray]:
    lattice = ewald.lattice
    f = np.arange(grid) / grid
    F1, F2 = np.meshgrid(f, f, indexing="ij")
    frac = np.column_stack([F1.ravel(), F2.ravel()])[1:]
    values = ewald.zero_mean(_reduce_to_cell(lattice, lattice.to_cartesian(frac)))
    best = frac[int(np.argmin(values))]

    def objective(z):
        point = _reduce_to_cell(lattice, lattice.to_cartesian(z)[None, :])
        if _nearest_lattice_distance(lattice, point)[0] < 1e-6:
            return np.inf
        return float(ewald.zero_mean(point)[0])

    result = optimize.minimize(objective, best, method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    point = lattice.to_cartesian(result.x)
    return min(float(result.fun), float(values.min())), point


def _unit_kernel(lattice: BravaisLattice, grid: int = MIN_GRID, shells: int = 6) -> _UnitKernel:
    key = tuple(np.round(np.concatenate([lattice.u1, lattice.u2]), 12)) + (grid, shells)
    with _kernel_lock:
        cached = _kernel_cache.get(key)
    if cached is not None:
        return cached

    ewald = _EwaldSum(lattice)
    madelung = _MadelungSum(lattice)
    minimum, point = _fractional_min(ewald, grid)
    M = -minimum
    reduced = _reduce_to_cell(lattice, point[None, :])
    M_prime = -float(madelung.evaluate(reduced, shells)[0])
    a = M + ewald.regular_at_origin()
    kernel = _UnitKernel(lattice, ewald, madelung, M, M_prime, a, point)
    logger.info(f"🧮 Kernel constants: M={M:.10g}, M'={M_prime:.10g}, a={a:.10g}")
    with _kernel_lock:
        _kernel_cache[key] = kernel
    return kernel


@dataclass(frozen=True, eq=False)
class PeriodicKernel:
    unit: _UnitKernel
    lattice: BravaisLattice
    L: float

    @property
    def fourier_constant(self) -> float:
        """M / L"""
        return self.unit.M / self.L

    @property
    def offset(self) -> float:
        """M' / L"""
        return self.unit.M_prime / self.L

    @property
    def near_origin_constant(self) -> float:
        """a / L = lim (W_L(x) - 1/|x|)"""
        return self.unit.a / self.L


def build_kernel(bravais: BravaisLattice, L: float = 1.0, shells: int = 6) -> PeriodicKernel:
    """Kernel W_L on the lattice L * bravais"""
    if L <= 0.0:
        raise LatticeError("kernel scale must be positive")
    unit = _unit_kernel(bravais, shells=shells)
    return PeriodicKernel(unit=unit, lattice=bravais.scaled(L), L=float(L))


def _check_reciprocal(kern: PeriodicKernel, v: np.ndarray):
    miller = kern.lattice.reciprocal_miller(v)
    if np.max(np.abs(miller - np.round(miller))) > 1e-9:
        raise LatticeError(f"{v} is not a reciprocal lattice vector")


def kernel_coefficient(kern: PeriodicKernel, v) -> float:
    """Coefficient on the orthonormal mode e_v = exp(i v.x)/sqrt|cell|; M/L at v = 0"""
    v = np.asarray(v, dtype=float)
    _check_reciprocal(kern, v)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return kern.fourier_constant
    return TWO_PI / (math.sqrt(kern.lattice.cell_area) * norm)


def fourier_coefficients(kern: PeriodicKernel, vectors: np.ndarray) -> np.ndarray:
    """Plain coefficients w_v: W_L = sum_v w_v exp(i v.x)"""
    norms = np.linalg.norm(np.asarray(vectors, dtype=float), axis=-1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > 0.0, TWO_PI / (kern.lattice.cell_area * safe), kern.fourier_constant)


def _as_points(x) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    return points.reshape(-1, 2), single


def _unit_points(kern: PeriodicKernel, x) -> Tuple[np.ndarray, bool]:
    points, single = _as_points(x)
    reduced = _reduce_to_cell(kern.unit.lattice, points / kern.L)
    if np.any(_nearest_lattice_distance(kern.unit.lattice, reduced) * kern.L < SINGULARITY_TOL):
        raise KernelSingularityError("kernel singularity")
    return reduced, single


def evaluate_fourier(kern: PeriodicKernel, x, cutoff: Optional[float] = None, mode: str = "ewald"):
    """
    Fourier representation of W_L at x (a point or an array of points).

    mode="ewald": the full series, its tail resummed in real space; cutoff is ignored.
    mode="plain": isotropic truncation |v| <= cutoff. The error is oscillatory and
    decays only like O(1/sqrt(cutoff |x|)) pointwise, O(1/cutoff) in cell average.
    """
    if mode == "ewald":
        reduced, single = _unit_points(kern, x)
        values = (kern.unit.ewald.zero_mean(reduced) + kern.unit.M) / kern.L
    elif mode == "plain":
        if cutoff is None:
            raise LatticeError("plain Fourier evaluation needs a cutoff")
        points, single = _as_points(x)
        miller = kern.lattice.reciprocal_within(cutoff, include_zero=False)
        if len(miller) == 0:
            raise LatticeError("cutoff is below the shortest reciprocal vector")
        vectors = kern.lattice.reciprocal_vectors(miller)
        weights = fourier_coefficients(kern, vectors)
        values = kern.fourier_constant + np.cos(points @ vectors.T) @ weights
    else:
        raise LatticeError(f"unknown Fourier evaluation mode {mode!r}")
    return float(values[0]) if single else values


def evaluate_madelung(kern: PeriodicKernel, x, shells: int = 6):
    """Madelung form sum_u f_L(x - u) + M'/L with block extrapolation in the shell count"""
    if shells < 2:
        raise LatticeError("Madelung summation needs at least 2 shells")
    reduced, single = _unit_points(kern, x)
    values = (kern.unit.madelung.evaluate(reduced, shells) + kern.unit.M_prime) / kern.L
    return float(values[0]) if single else values


def grid_minimum(kern: PeriodicKernel, n: int = MIN_GRID) -> float:
    """min of W_L over the n x n cell grid, lattice points excluded"""
    f = np.arange(n) / n
    F1, F2 = np.meshgrid(f, f, indexing="ij")
    frac = np.column_stack([F1.ravel(), F2.ravel()])[1:]
    return float(np.min(evaluate_fourier(kern, kern.lattice.to_cartesian(frac))))


def periodic_hartree(kern: PeriodicKernel, density: FourierField) -> FourierField:
    """Coefficients of rho *_L W_L: h_v = |cell| r_v w_v"""
    if abs(density.lattice.cell_area - kern.lattice.cell_area) > 1e-9 * kern.lattice.cell_area:
        raise LatticeError("density and kernel live on different lattices")
    weights = fourier_coefficients(kern, density.vectors())
    return FourierField(density.lattice, density.coefficients * weights * kern.lattice.cell_area)


def hartree_energy(kern: PeriodicKernel, rho: FourierField, other: Optional[FourierField] = None) -> float:
    """D_L(rho, rho') = int_cell (rho * W_L) rho'"""
    other = rho if other is None else other
    weights = fourier_coefficients(kern, rho.vectors())
    area = kern.lattice.cell_area
    return float(area * area * np.sum(rho.coefficients * np.conj(other.coefficients) * weights).real)


# =============================================================================
# ORACLES
# =============================================================================

@dataclass(frozen=True)
class PoissonCheck:
    lhs: float
    rhs: float

    @property
    def difference(self) -> float:
        return abs(self.lhs - self.rhs)


def poisson_check(width: float, lattice: BravaisLattice, x=(0.0, 0.0)) -> PoissonCheck:
    """Both sides of (2 pi/|cell|) sum_v f^(v) exp(i x.v) = sum_u f(u + x) for f = exp(-|y|^2 / 2 width^2)"""
    x = np.asarray(x, dtype=float)
    reach = math.sqrt(2.0 * 42.0)
    cells = lattice.cells_within(reach * width + np.linalg.norm(x) + np.linalg.norm(lattice.u1 + lattice.u2))
    shifted = lattice.to_cartesian(cells) + x
    rhs = float(np.sum(np.exp(-np.sum(shifted ** 2, axis=1) / (2.0 * width ** 2))))

    miller = lattice.reciprocal_within(reach / width)
    vectors = lattice.reciprocal_vectors(miller)
    # unitary transform of the Gaussian
    transform = width ** 2 * np.exp(-0.5 * width ** 2 * np.sum(vectors ** 2, axis=1))
    lhs = float(TWO_PI / lattice.cell_area * np.sum(transform * np.cos(vectors @ x)))
    return PoissonCheck(lhs=lhs, rhs=rhs)


def exp_self_convolution(nu: float, r: float, n_angular: int = 256) -> float:
    """(exp(-nu|.|) * exp(-nu|.|))(x) at |x| = r by polar quadrature around the origin"""
    nodes, weights = np.polynomial.legendre.leggauss(n_angular)
    phi = 0.5 * math.pi * (nodes + 1.0)
    w = 0.5 * math.pi * weights
    cos_phi = np.cos(phi)

    def radial(rho):
        dist = np.sqrt(np.maximum(rho * rho + r * r - 2.0 * rho * r * cos_phi, 0.0))
        return 2.0 * rho * math.exp(-nu * rho) * float(w @ np.exp(-nu * dist))

    inner = integrate.quad(radial, 0.0, r, limit=200, epsabs=0.0, epsrel=1e-11)[0] if r > 0 else 0.0
    outer = integrate.quad(radial, r, np.inf, limit=200, epsabs=0.0, epsrel=1e-11)[0]
    return inner + outer


def exp_self_convolution_exact(nu: float, r: float) -> float:
    """Closed form (pi/4) r^2 K_2(nu r), pi/(2 nu^2) at r = 0"""
    if r == 0.0:
        return math.pi / (2.0 * nu * nu)
    return math.pi / 4.0 * r * r * float(special.kv(2, nu * r))


def convolution_bracket(nu: float, r: float) -> Tuple[float, float]:
    """(1 + nu r) exp(-nu r) / nu^2 times (1, pi/2)"""
    base = (1.0 + nu * r) * math.exp(-nu * r) / (nu * nu)
    return base, 0.5 * math.pi * base


def convolution_envelope(nu: float, r: float) -> float:
    """Upper bound (pi/2) (1 + nu r)^(3/2) exp(-nu r) / nu^2, valid for all r"""
    return 0.5 * math.pi * (1.0 + nu * r) ** 1.5 * math.exp(-nu * r) / (nu * nu)


def convolution_report(nus: Sequence[float], radii: Sequence[float]) -> Dict:
    """Quadrature values against the lower bound and the envelope; below_upper records the (pi/2) bound, which only holds at r = 0"""
    rows = []
    for nu in nus:
        for r in radii:
            value = exp_self_convolution(nu, r)
            lower, upper = convolution_bracket(nu, r)
            envelope = convolution_envelope(nu, r)
            rows.append({
                "nu": nu,
                "r": r,
                "value": value,
                "lower": lower,
                "upper": upper,
                "envelope": envelope,
                "below_upper": value <= upper * (1 + 1e-9),
                "in_bracket": lower * (1 - 1e-9) <= value <= envelope * (1 + 1e-9),
            })
    return {"rows": rows, "all_in_bracket": all(row["in_bracket"] for row in rows)}


def kernel_report(kern: PeriodicKernel, n_points: int = 10, seed: int = 0, shells: int = 6) -> Dict:
    """Constants and cross-checks of the kernel, the payload of the kernel command"""
    rng = np.random.default_rng(seed)
    frac = rng.uniform(-0.5, 0.5, size=(n_points, 2))
    points = kern.lattice.to_cartesian(frac)
    keep = _nearest_lattice_distance(kern.lattice, points) > 0.05 * kern.L
    points = points[keep]
    fourier = np.atleast_1d(evaluate_fourier(kern, points))
    madelung = np.atleast_1d(evaluate_madelung(kern, points, shells))

    radii = [1e-2 * kern.L, 5e-3 * kern.L, 2.5e-3 * kern.L]
    direction = np.array([math.cos(0.3), math.sin(0.3)])
    near = [float(evaluate_fourier(kern, r * direction) - 1.0 / r) for r in radii]

    return {
        "L": kern.L,
        "cell_area": kern.lattice.cell_area,
        "M": kern.unit.M,
        "M_prime": kern.unit.M_prime,
        "a": kern.unit.a,
        "fourier_constant": kern.fourier_constant,
        "offset": kern.offset,
        "near_origin_constant": kern.near_origin_constant,
        "ewald_alpha": kern.unit.ewald.alpha,
        "cross_check_max_difference": float(np.max(np.abs(fourier - madelung))) if len(points) else 0.0,
        "near_origin_sequence": near,
        "grid_minimum": grid_minimum(kern),
    }
