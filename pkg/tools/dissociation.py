# tools/dissociation.py

"""
Tight-binding parameters of a motif lattice in the dissociation regime.

Atoms sit at L r for every vertex r. Each is dressed with the reference
orbital v(. - L r); hopping values come from the interaction coefficient
    theta = < v_r, chi_r V_L (1 - chi_r') v_r' >
and the on-site energy from the radial problem in the localized potential
chi_r V_L. Cutoff radii scale with L.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, ndimage
from scipy.interpolate import CubicSpline

from tools.atom import TAIL_EXPONENT, AtomSolution, BoundState, RadialPotential, lowest_radial_eigenpair
from tools.coulomb2d import evaluate_fourier, fourier_coefficients
from tools.errors import ConfigError, InsufficientSamplesError, SolverError
from tools.fourier_grid import FourierField
from tools.lattice2d import EdgeOrbitSet, KPath, MotifLattice, edge_orbits, neighbor_shells
from tools.planewave import BandStructure
from tools.scf import SCFState, structure_factor
from tools.tightbinding import TBModel, tb_bands, tunneling_coefficient

logger = logging.getLogger(__name__)

Sampler = Callable[[np.ndarray], np.ndarray]

TAIL_START = 0.9
DEFAULT_DELTA = 0.2
# Q^{-1/2} entries below this are eigensolver round-off
ROUNDOFF_FLOOR = 1e-12


# =============================================================================
# CUTOFF
# =============================================================================

def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


@dataclass(frozen=True)
class CutoffProfile:
    """chi = 1 - S(t)^2 with S the quintic smoothstep; chi = 1 on s <= inner, 0 on s >= outer"""
    delta: float
    d0: float
    inner: float
    outer: float

    def ramp(self, s) -> np.ndarray:
        """sqrt(1 - chi)"""
        t = np.clip((np.asarray(s, dtype=float) - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        return _smoothstep(t)

    def __call__(self, s) -> np.ndarray:
        ramp = self.ramp(s)
        return 1.0 - ramp * ramp

    def scaled(self, L: float) -> "CutoffProfile":
        return CutoffProfile(self.delta, self.d0, L * self.inner, L * self.outer)


def make_cutoff(delta: float, d0: float, L: float = 1.0) -> CutoffProfile:
    if not 0.0 < delta < 0.5:
        raise ConfigError(f"cutoff delta must lie in (0, 1/2), got {delta}")
    if d0 <= 0.0:
        raise ConfigError("nearest-neighbor distance must be positive")
    inner = 0.5 * (1.0 + delta) * d0
    outer = (0.5 + delta) * d0
    return CutoffProfile(delta, d0, L * inner, L * outer)


# =============================================================================
# ORBITAL AND MEAN-FIELD SAMPLERS
# =============================================================================

@dataclass(frozen=True, eq=False)
class OrbitalProfile:
    """Radial orbital v(r) with an exp(-sqrt(mu) r)/sqrt(r) tail past the solver window"""
    fn: Callable[[np.ndarray], np.ndarray]
    decay: float
    extent: float

    @classmethod
    def from_atom(cls, atom: AtomSolution) -> "OrbitalProfile":
        grid = atom.grid
        cut = TAIL_START * grid.r_max
        resolved = (grid.nodes <= cut) & (atom.v > math.exp(-TAIL_EXPONENT) * atom.v.max())
        # contiguous prefix only, the spline must not bridge round-off
        stop = int(np.argmin(resolved)) if not resolved.all() else len(resolved)
        keep = np.arange(grid.n) < stop
        r = grid.nodes[keep]
        log_v = CubicSpline(r, np.log(atom.v[keep]))
        r_tail = float(r[-1])
        rate = atom.decay_rate

        def fn(x):
            x = np.asarray(x, dtype=float)
            inner = np.minimum(x, r_tail)
            values = log_v(inner)
            tail = values - rate * (x - r_tail) - 0.5 * np.log(np.maximum(x, r_tail) / r_tail)
            return np.exp(np.where(x <= r_tail, values, tail))

        return cls(fn=fn, decay=rate, extent=grid.r_max)

    def __call__(self, r) -> np.ndarray:
        return self.fn(r)


def superposition_sampler(atom: AtomSolution, m: MotifLattice, L: float, reach: Optional[float] = None) -> Sampler:
    """V_L(x) ~ sum over vertices s of V^MF(x - L s)"""
    grid = atom.grid
    regular = CubicSpline(grid.nodes, atom.VMF + 1.0 / grid.nodes)
    m1 = atom.second_moment()
    r_max = grid.r_max
    reach = reach if reach is not None else 8.0 * L + r_max / 4.0

    def vmf(r):
        inside = np.minimum(r, r_max)
        far = 1.0 / np.maximum(r, r_max) + m1 / (4.0 * np.maximum(r, r_max) ** 3)
        return np.where(r <= r_max, regular(inside), far) - 1.0 / r

    def sample(points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        center = points.mean(axis=0)
        spread = float(np.max(np.linalg.norm(points - center, axis=1)))
        cells = m.bravais.to_cartesian(m.bravais.cells_within((reach + spread) / L + 2.0))
        values = np.zeros(len(points))
        for shift in m.shifts:
            sites = L * (cells + shift)
            near = np.linalg.norm(sites - center, axis=1) <= reach + spread
            dist = np.linalg.norm(points[:, None, :] - sites[near][None, :, :], axis=-1)
            values += np.sum(vmf(dist), axis=1)
        return values

    return sample


def scf_sampler(state: SCFState) -> Sampler:
    """Converged mean field: smooth part interpolated from the FFT grid, nuclear Coulomb part exact"""
    config = state.config
    m, L, kern = state.motif, config.L, state.kernel
    lattice = state.lattice
    nuclear = FourierField.from_function(
        lattice, state.potential.shape,
        lambda vectors: fourier_coefficients(kern, vectors) * structure_factor(m, L, vectors),
    )
    values = (state.potential + config.potential_scale * nuclear).to_real_space()
    shape = np.array(values.shape)

    def sample(points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        frac = lattice.to_fractional(points)
        coords = (frac - np.floor(frac)).T * shape[:, None]
        out = ndimage.map_coordinates(values, coords, order=3, mode="grid-wrap")
        for shift in m.shifts:
            out -= config.potential_scale * np.atleast_1d(evaluate_fourier(kern, points - L * shift))
        return out

    return sample


def mean_field_sampler(source: Union[AtomSolution, SCFState], m: Optional[MotifLattice] = None,
                       L: Optional[float] = None) -> Sampler:
    if isinstance(source, SCFState):
        return scf_sampler(source)
    if m is None or L is None:
        raise ConfigError("the superposition sampler needs the motif lattice and L")
    return superposition_sampler(source, m, L)


# =============================================================================
# ON-SITE ENERGY AND INTERACTION COEFFICIENT
# =============================================================================

def effective_mu(atom: AtomSolution, sampler: Sampler, center, cutoff: CutoffProfile, n_angles: int = 32) -> float:
    """mu_L from the radial problem in the angular mean of chi V_L around center"""
    grid = atom.grid
    center = np.asarray(center, dtype=float)
    inside = grid.nodes < cutoff.outer
    r = grid.nodes[inside]
    angles = 2.0 * math.pi * (np.arange(n_angles) + 0.5) / n_angles
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    points = center + (r[:, None, None] * directions[None, :, :]).reshape(-1, 2)
    mean = sampler(points).reshape(len(r), n_angles).mean(axis=1)
    chi = cutoff(r)

    samples = np.zeros(grid.n)
    # chi V = chi (V + 1/r) - 1/r + (1 - chi)/r
    samples[inside] = chi * (mean + 1.0 / r) + (1.0 - chi) / r
    samples[~inside] = 1.0 / grid.nodes[~inside]
    pair = lowest_radial_eigenpair(RadialPotential(samples, charge=1.0), grid, n_states=1)
    if pair.state is BoundState.NONE:
        raise SolverError("localized potential has no bound state")
    return -pair.lowest


@dataclass(frozen=True)
class ThetaEstimate:
    theta: float
    error: float
    L: float
    T_L: float
    orbit: int

    def to_dict(self) -> Dict:
        return {"theta": self.theta, "error": self.error, "L": self.L, "T_L": self.T_L, "orbit": self.orbit}


def _theta_quadrature(orbital: OrbitalProfile, sampler: Sampler, a: np.ndarray, b: np.ndarray,
                      cutoff: CutoffProfile, n_radial: int, n_angular: int) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(n_radial)
    radii, radial_weights = [], []
    for lo, hi in ((0.0, cutoff.inner), (cutoff.inner, cutoff.outer)):
        radii.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
        radial_weights.append(0.5 * (hi - lo) * weights)
    rho = np.concatenate(radii)
    w_rho = np.concatenate(radial_weights)
    phi = 2.0 * math.pi * np.arange(n_angular) / n_angular
    directions = np.column_stack([np.cos(phi), np.sin(phi)])

    offsets = (rho[:, None, None] * directions[None, :, :]).reshape(-1, 2)
    points = a + offsets
    dist_b = np.linalg.norm(points - b, axis=1)
    rho_flat = np.repeat(rho, n_angular)
    integrand = (orbital(rho_flat) * cutoff(rho_flat) * sampler(points)
                 * (1.0 - cutoff(dist_b)) * orbital(dist_b) * rho_flat)
    return float((2.0 * math.pi / n_angular) * (integrand.reshape(len(rho), n_angular).sum(axis=1) @ w_rho))


def interaction_coefficient(orbital: OrbitalProfile, sampler: Sampler, m: MotifLattice, L: float, pair,
                            cutoff: CutoffProfile, mu: float, orbit: int = 0,
                            n_radial: int = 48, n_angular: int = 64) -> ThetaEstimate:
    """theta for the edge (site, cell, other); cutoff radii are absolute (already scaled by L)"""
    site, cell, other = pair
    a = L * m.vertex(site, (0, 0))
    b = L * m.vertex(other, cell)
    if abs(np.linalg.norm(b - a) - L * cutoff.d0) > 1e-9 * max(1.0, L):
        raise ConfigError("interaction coefficient needs a nearest-neighbor pair")
    coarse = _theta_quadrature(orbital, sampler, a, b, cutoff, n_radial, n_angular)
    fine = _theta_quadrature(orbital, sampler, a, b, cutoff, 2 * n_radial, 2 * n_angular)
    estimate = ThetaEstimate(theta=fine, error=abs(fine - coarse), L=L, T_L=tunneling_coefficient(mu, L), orbit=orbit)
    logger.debug(f"📈 theta[{orbit}] at L={L}: {fine:.6e} +- {estimate.error:.2e}")
    return estimate


@dataclass(frozen=True)
class TBParameters:
    mu_L: float
    estimates: Tuple[ThetaEstimate, ...]
    L: float
    T_L: float

    @property
    def thetas(self) -> Tuple[float, ...]:
        return tuple(e.theta for e in self.estimates)


def first_principles_parameters(atom: AtomSolution, sampler: Sampler, m: MotifLattice, L: float,
                                delta: float = DEFAULT_DELTA, orbit_set: Optional[EdgeOrbitSet] = None,
                                n_radial: int = 48, n_angular: int = 64) -> TBParameters:
    orbit_set = orbit_set or edge_orbits(m)
    cutoff = make_cutoff(delta, orbit_set.d0, L)
    orbital = OrbitalProfile.from_atom(atom)
    mu_L = effective_mu(atom, sampler, L * m.vertex(0, (0, 0)), cutoff)
    estimates = tuple(
        interaction_coefficient(orbital, sampler, m, L, orbit.representative, cutoff, atom.mu, index, n_radial, n_angular)
        for index, orbit in enumerate(orbit_set.orbits)
    )
    T_L = tunneling_coefficient(atom.mu, L)
    logger.info(f"📈 L={L}: mu_L={mu_L:.10g}, thetas={[f'{e.theta:.4e}' for e in estimates]}, T_L={T_L:.3e}")
    return TBParameters(mu_L=mu_L, estimates=estimates, L=L, T_L=T_L)


def tb_from_first_principles(atom: AtomSolution, source: Union[AtomSolution, SCFState], m: MotifLattice, L: float,
                             delta: float = DEFAULT_DELTA, orbit_set: Optional[EdgeOrbitSet] = None) -> TBModel:
    """TB model with mu_L from the localized radial problem and thetas from the interaction coefficient"""
    orbit_set = orbit_set or edge_orbits(m)
    sampler = mean_field_sampler(source, m, L)
    params = first_principles_parameters(atom, sampler, m, L, delta, orbit_set)
    return TBModel(mu_L=params.mu_L, thetas=params.thetas, orbit_set=orbit_set, motif=m, L=L, T_L=params.T_L,
                   estimates=params.estimates)


# =============================================================================
# GRAM MATRIX
# =============================================================================

def orbital_overlap(orbital: OrbitalProfile, distance: float, n_xi: int = 160, n_eta: int = 128) -> float:
    """zeta(D) = int v(|x|) v(|x - D e|) dx in elliptic coordinates around the two centers"""
    if distance <= 0.0:
        raise ConfigError("overlap distance must be positive")
    half = 0.5 * distance
    # v^2 below exp(-70) past this sum of distances
    reach = distance + 70.0 / max(orbital.decay, 1e-3)
    xi_max = math.acosh(reach / distance)
    panels = np.linspace(0.0, xi_max, 9)
    nodes, weights = np.polynomial.legendre.leggauss(max(n_xi // 8, 4))
    xi = np.concatenate([0.5 * (b - a) * nodes + 0.5 * (a + b) for a, b in zip(panels[:-1], panels[1:])])
    w_xi = np.concatenate([0.5 * (b - a) * weights for a, b in zip(panels[:-1], panels[1:])])
    eta = 2.0 * math.pi * np.arange(n_eta) / n_eta

    cosh = np.cosh(xi)[:, None]
    cos = np.cos(eta)[None, :]
    r1 = half * (cosh + cos)
    r2 = half * (cosh - cos)
    integrand = orbital(r1) * orbital(r2) * r1 * r2
    return float((2.0 * math.pi / n_eta) * (integrand.sum(axis=1) @ w_xi))


@dataclass(frozen=True, eq=False)
class GramData:
    radius: float
    vertices: Tuple[Tuple[int, Tuple[int, int]], ...]
    positions: np.ndarray
    Q: np.ndarray
    Q_inv_sqrt: np.ndarray

    def orthonormality_defect(self) -> float:
        product = self.Q_inv_sqrt @ self.Q @ self.Q_inv_sqrt
        return float(np.max(np.abs(product - np.eye(len(self.Q)))))

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions[:, None, :] - self.positions[None, :, :], axis=-1)

    def nearest_overlap(self, d: float) -> float:
        return float(np.max(self.Q[np.isclose(self.distances(), d, rtol=1e-9)]))

    def expansion_defect(self, d: float) -> float:
        """||Q - I - zeta J||_2 / zeta, J the adjacency of vertices at distance d"""
        J = np.isclose(self.distances(), d, rtol=1e-9).astype(float)
        zeta = self.nearest_overlap(d)
        return float(np.linalg.norm(self.Q - np.eye(len(self.Q)) - zeta * J, 2) / zeta)

    def decay_ratio(self, mu: float, L: float, eps: float = 0.2) -> float:
        """max |Q^{-1/2}(r, r')| / (2 T_L^{(1 - eps)|r - r'|}) over resolved pairs, distances in unscaled units"""
        dist = self.distances() / L
        bound = 2.0 * np.exp(-(1.0 - eps) * math.sqrt(mu) * L * dist)
        resolved = bound >= ROUNDOFF_FLOOR
        return float(np.max(np.abs(self.Q_inv_sqrt[resolved]) / bound[resolved]))


def gram_matrix(orbital: OrbitalProfile, m: MotifLattice, L: float, radius_factor: float = 4.0,
                center=(0.0, 0.0)) -> GramData:
    """Overlaps of the orbitals on the vertices within radius_factor d0 L of center, and Q^{-1/2}"""
    if radius_factor < 2.0:
        raise ConfigError("Gram truncation radius must be at least 2 d0")
    d0 = neighbor_shells(m).d0
    radius = radius_factor * d0 * L
    center = np.asarray(center, dtype=float)
    cells = m.bravais.cells_within(radius / L + float(np.max(np.linalg.norm(m.shifts, axis=1))) + np.linalg.norm(center) / L)
    vertices, positions = [], []
    for site in range(m.n_sites):
        for cell in cells:
            x = L * m.vertex(site, cell)
            if np.linalg.norm(x - center) <= radius * (1.0 + 1e-12):
                vertices.append((site, (int(cell[0]), int(cell[1]))))
                positions.append(x)
    positions = np.array(positions)
    n = len(positions)

    cache: Dict[float, float] = {}
    Q = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(positions[i] - positions[j]))
            key = round(d, 9)
            if key not in cache:
                cache[key] = orbital_overlap(orbital, d)
            Q[i, j] = Q[j, i] = cache[key]

    values, vectors = linalg.eigh(Q)
    if values[0] <= 0.0:
        raise SolverError(f"Gram matrix not positive definite (smallest eigenvalue {values[0]:.3e})")
    Q_inv_sqrt = (vectors / np.sqrt(values)) @ vectors.T
    logger.info(f"📈 Gram matrix: {n} vertices, {len(cache)} distinct distances, min eigenvalue {values[0]:.6g}")
    return GramData(radius=radius, vertices=tuple(vertices), positions=positions, Q=Q, Q_inv_sqrt=Q_inv_sqrt)


# =============================================================================
# COMPARISONS AND FITS
# =============================================================================

@dataclass(frozen=True)
class TheoremReport:
    L: float
    sup_error: float
    aligned_error: float
    offset: float
    theta_max: float
    ratio: float
    aligned_ratio: float
    uniformity: float
    per_band: List[float]

    def to_dict(self) -> Dict:
        return {
            "L": self.L,
            "sup_error": self.sup_error,
            "aligned_error": self.aligned_error,
            "offset": self.offset,
            "theta_max": self.theta_max,
            "ratio": self.ratio,
            "aligned_ratio": self.aligned_ratio,
            "uniformity": self.uniformity,
            "per_band": self.per_band,
        }


def theorem_check(tb: TBModel, pw: BandStructure, path: KPath) -> TheoremReport:
    """Sup error between the lowest plane-wave bands and the TB bands on one path, and its ratio to max |theta|

    The offset-free error is reported next to it for diagnosis only; the ratio keeps any mu_L misfit.
    """
    if len(pw.path) != len(path) or not np.allclose(pw.path.kpoints, path.kpoints, atol=1e-12):
        raise SolverError("mismatched k-paths")
    n = tb.motif.n_sites
    if pw.eigenvalues.shape[1] < n:
        raise SolverError(f"plane-wave bands hold fewer than {n} bands")
    tb_values = tb_bands(tb, path).eigenvalues
    diff = pw.eigenvalues[:, :n] - tb_values
    offset = float(np.mean(diff))
    error = np.abs(diff)
    aligned = np.abs(diff - offset)
    theta_max = max(abs(t) for t in tb.thetas)
    per_k = error.max(axis=1)
    median = float(np.median(per_k))
    sup_error = float(error.max())
    aligned_error = float(aligned.max())
    report = TheoremReport(
        L=tb.L,
        sup_error=sup_error,
        aligned_error=aligned_error,
        offset=offset,
        theta_max=theta_max,
        ratio=sup_error / theta_max if theta_max > 0.0 else math.inf,
        aligned_ratio=aligned_error / theta_max if theta_max > 0.0 else math.inf,
        uniformity=float(per_k.max() / median) if median > 0.0 else math.inf,
        per_band=[float(x) for x in error.max(axis=0)],
    )
    logger.info(f"📈 L={tb.L}: sup error={report.sup_error:.3e}, aligned={report.aligned_error:.3e}, ratio={report.ratio:.3g}")
    return report


def error_decay(reports: Sequence[TheoremReport]) -> Dict:
    """Decay rate of the sup error across an L-sweep and whether sup error / |theta| decreases"""
    if len(reports) < 2:
        raise InsufficientSamplesError("error decay needs at least two scales")
    Ls = np.array([r.L for r in reports])
    errors = np.array([max(r.sup_error, 1e-300) for r in reports])
    ratios = [r.ratio for r in reports]
    rate = float(-np.polyfit(Ls, np.log(errors), 1)[0])
    return {
        "rate": rate,
        "ratios": ratios,
        "aligned_ratios": [r.aligned_ratio for r in reports],
        "ratio_decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
    }


@dataclass(frozen=True)
class EnvelopeFit:
    slope: float
    slope_stderr: float
    expected_slope: float
    relative_deviation: float
    C_eps: float
    lower_constant: float
    eps: float

    def to_dict(self) -> Dict:
        return {
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "expected_slope": self.expected_slope,
            "relative_deviation": self.relative_deviation,
            "C_eps": self.C_eps,
            "lower_constant": self.lower_constant,
            "eps": self.eps,
        }


def envelope_fit(Ls: Sequence[float], values: Sequence[float], mu: float, d0: float, eps: float = 0.2) -> EnvelopeFit:
    """Least-squares slope of log|value| in L against -sqrt(mu) d0, with the constants of the two-sided envelope"""
    Ls = np.asarray(Ls, dtype=float)
    magnitudes = np.abs(np.asarray(values, dtype=float))
    if len(Ls) < 3:
        raise InsufficientSamplesError("envelope fit needs at least three scales")
    if np.any(magnitudes <= 0.0):
        raise SolverError("envelope fit needs nonzero values")
    coefficients, cov = np.polyfit(Ls, np.log(magnitudes), 1, cov=True)
    slope = float(coefficients[0])
    expected = -math.sqrt(mu) * d0
    rate = math.sqrt(mu) * d0
    C_eps = float(np.max(magnitudes * np.exp((1.0 - eps) * rate * Ls)))
    lower = float(np.min(magnitudes * np.exp((1.0 + eps) * rate * Ls)))
    fit = EnvelopeFit(
        slope=slope,
        slope_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
        expected_slope=expected,
        relative_deviation=abs(slope - expected) / abs(expected),
        C_eps=C_eps,
        lower_constant=lower,
        eps=eps,
    )
    logger.info(f"📈 Envelope fit: slope={slope:.5g} vs {expected:.5g} ({100 * fit.relative_deviation:.1f}%)")
    return fit
