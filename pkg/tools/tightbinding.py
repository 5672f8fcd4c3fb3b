# tools/tightbinding.py

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from tools.errors import InsufficientSamplesError, LatticeError
from tools.lattice2d import EdgeOrbitSet, KPath, MotifLattice

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)
# unit honeycomb basis used by the Wallace dispersion
WALLACE_U1 = np.array([SQRT3 / 2.0, 0.5])
WALLACE_U2 = np.array([SQRT3 / 2.0, -0.5])

MIN_CONE_DIRECTIONS = 8
MIN_CONE_RADII = 2


def tunneling_coefficient(mu: float, L: float) -> float:
    """T_L = exp(-sqrt(mu) L)"""
    return float(np.exp(-np.sqrt(mu) * L))


def bloch_matrix(m: MotifLattice, orbits: EdgeOrbitSet, orbit_index: int, k) -> np.ndarray:
    """B(k)[r, r'] = sum of exp(i k.u) over shifts u with (r, u + r') in the orbit"""
    if not 0 <= orbit_index < orbits.m:
        raise LatticeError(f"orbit index {orbit_index} out of range for {orbits.m} orbit(s)")
    k = np.asarray(k, dtype=float)
    B = np.zeros((m.n_sites, m.n_sites), dtype=complex)
    for s, cell, t in orbits.orbits[orbit_index].pairs:
        u = m.bravais.to_cartesian(cell)
        B[s, t] += np.exp(1j * (k @ u))
    return B


@dataclass(frozen=True, eq=False)
class TBModel:
    mu_L: float
    thetas: Tuple[float, ...]
    orbit_set: EdgeOrbitSet
    motif: MotifLattice
    L: float = 1.0
    T_L: Optional[float] = None
    # quadrature reports behind each theta, empty for hand-set models
    estimates: Tuple = ()

    def __post_init__(self):
        if len(self.thetas) != self.orbit_set.m:
            raise LatticeError(f"expected {self.orbit_set.m} hopping value(s), got {len(self.thetas)}")

    def hamiltonian(self, k) -> np.ndarray:
        """-mu_L I + sum_k theta_k B_k(L k)"""
        k = np.asarray(k, dtype=float)
        H = -self.mu_L * np.eye(self.motif.n_sites, dtype=complex)
        for index, theta in enumerate(self.thetas):
            H += theta * bloch_matrix(self.motif, self.orbit_set, index, self.L * k)
        return H

    def eigenvalues(self, k) -> np.ndarray:
        return linalg.eigvalsh(self.hamiltonian(k))

    def to_dict(self) -> Dict:
        return {
            "mu_L": self.mu_L,
            "thetas": list(self.thetas),
            "L": self.L,
            "T_L": self.T_L,
            "lattice": self.motif.name,
            "orbits": self.orbit_set.m,
            "estimates": [e.to_dict() for e in self.estimates],
        }


@dataclass(frozen=True, eq=False)
class TBBands:
    path: KPath
    eigenvalues: np.ndarray

    def rows(self) -> List[List]:
        return [
            [self.path.segment_labels[i], self.path.arc_length[i], *self.path.kpoints[i], *self.eigenvalues[i]]
            for i in range(len(self.path))
        ]


def tb_bands(model: TBModel, path: KPath) -> TBBands:
    values = np.array([model.eigenvalues(k) for k in path.kpoints])
    return TBBands(path=path, eigenvalues=values)


def wallace_dispersion(k) -> Tuple[float, float]:
    """(-|f(k)|, +|f(k)|) with f(k) = 1 + exp(i k.u1) + exp(i k.u2)"""
    k = np.asarray(k, dtype=float)
    f = 1.0 + np.exp(1j * (k @ WALLACE_U1)) + np.exp(1j * (k @ WALLACE_U2))
    magnitude = float(np.abs(f))
    return -magnitude, magnitude


@dataclass(frozen=True, eq=False)
class ConeSamples:
    """Two bands sampled on circles around a Brillouin-zone vertex"""
    vertex: np.ndarray
    kappas: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vertex_lower: float
    vertex_upper: float


def cone_samples(evaluator: Callable[[np.ndarray], Tuple[float, float]], vertex, radii: Sequence[float],
                 n_directions: int = 12, angle_offset: float = 0.1) -> ConeSamples:
    """Evaluate a (lower, upper) band pair at vertex + r (cos a, sin a)"""
    vertex = np.asarray(vertex, dtype=float)
    angles = angle_offset + 2.0 * np.pi * np.arange(n_directions) / n_directions
    kappas = np.array([r * np.array([np.cos(a), np.sin(a)]) for r in radii for a in angles])
    pairs = np.array([evaluator(vertex + kappa) for kappa in kappas])
    lower0, upper0 = evaluator(vertex)
    return ConeSamples(vertex, kappas, pairs[:, 0], pairs[:, 1], float(lower0), float(upper0))


@dataclass(frozen=True)
class DiracReport:
    vertex: Tuple[float, float]
    slope: float
    cone_energy: float
    residual: float
    gap: float
    n_samples: int
    radius: float

    def to_dict(self) -> Dict:
        return {
            "vertex": list(self.vertex),
            "slope": self.slope,
            "cone_energy": self.cone_energy,
            "residual": self.residual,
            "gap": self.gap,
            "n_samples": self.n_samples,
            "radius": self.radius,
        }


def dirac_report(samples: ConeSamples, radius: Optional[float] = None) -> DiracReport:
    """Fit the half splitting (mu+ - mu-)/2 - gap/2 = c |kappa| through the origin"""
    norms = np.linalg.norm(samples.kappas, axis=1)
    if radius is None:
        radius = float(np.max(norms)) if len(norms) else 0.0
    keep = (norms > 0.0) & (norms <= radius * (1.0 + 1e-12))
    directions = {round(float(np.arctan2(y, x)), 9) for x, y in samples.kappas[keep]}
    radii = {round(float(r), 12) for r in norms[keep]}
    if len(directions) < MIN_CONE_DIRECTIONS or len(radii) < MIN_CONE_RADII:
        raise InsufficientSamplesError(
            f"Dirac fit needs >= {MIN_CONE_DIRECTIONS} directions at >= {MIN_CONE_RADII} radii, "
            f"got {len(directions)} and {len(radii)}"
        )

    gap = max(samples.vertex_upper - samples.vertex_lower, 0.0)
    r = norms[keep]
    half = 0.5 * (samples.upper[keep] - samples.lower[keep]) - 0.5 * gap
    slope = float(r @ half / (r @ r))
    residual = float(np.sqrt(np.mean((half - slope * r) ** 2)))
    cone_energy = 0.5 * (samples.vertex_upper + samples.vertex_lower)
    logger.info(f"📈 Dirac fit at {samples.vertex}: slope={slope:.6g}, gap={gap:.3g}, residual={residual:.3g}")
    return DiracReport(
        vertex=(float(samples.vertex[0]), float(samples.vertex[1])),
        slope=slope,
        cone_energy=float(cone_energy),
        residual=residual,
        gap=float(gap),
        n_samples=int(keep.sum()),
        radius=float(radius),
    )
