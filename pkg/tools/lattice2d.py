# tools/lattice2d.py

import json
import logging
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.errors import ConfigError, LatticeError

logger = logging.getLogger(__name__)

KNOWLEDGE_PATH = os.path.join(os.path.dirname(__file__), "../knowledge")
PRESETS_PATH = os.path.join(KNOWLEDGE_PATH, "lattice-presets.json")

TWO_PI = 2.0 * np.pi
GEOMETRY_TOL = 1e-9

# Accepted spellings of the special points
LABEL_ALIASES = {
    "Γ": "Γ",
    "G": "Γ",
    "Gamma": "Γ",
    "K": "K",
    "K'": "K'",
    "Kp": "K'",
    "M": "M",
}

Edge = Tuple[int, Tuple[int, int], int]


def reciprocal_basis(u1, u2) -> Tuple[np.ndarray, np.ndarray]:
    """Reciprocal vectors with v_i . u_j = 2 pi delta_ij"""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    det = u1[0] * u2[1] - u1[1] * u2[0]
    if abs(det) <= 1e-12 * np.linalg.norm(u1) * np.linalg.norm(u2) or det == 0.0:
        raise LatticeError("singular lattice basis")
    v1 = TWO_PI / det * np.array([u2[1], -u2[0]])
    v2 = TWO_PI / det * np.array([-u1[1], u1[0]])
    return v1, v2


@dataclass(frozen=True, eq=False)
class BravaisLattice:
    u1: np.ndarray
    u2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    cell_area: float

    @classmethod
    def from_vectors(cls, u1, u2) -> "BravaisLattice":
        u1 = np.array(u1, dtype=float)
        u2 = np.array(u2, dtype=float)
        v1, v2 = reciprocal_basis(u1, u2)
        area = float(abs(u1[0] * u2[1] - u1[1] * u2[0]))
        return cls(u1, u2, v1, v2, area)

    @property
    def basis(self) -> np.ndarray:
        """Direct basis as rows"""
        return np.vstack([self.u1, self.u2])

    @property
    def reciprocal(self) -> np.ndarray:
        """Reciprocal basis as rows"""
        return np.vstack([self.v1, self.v2])

    def to_cartesian(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.basis

    def to_fractional(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.reciprocal.T / TWO_PI

    def reciprocal_vectors(self, miller) -> np.ndarray:
        return np.asarray(miller, dtype=float) @ self.reciprocal

    def reciprocal_miller(self, v) -> np.ndarray:
        """Real-valued Miller coordinates of reciprocal-space points"""
        return np.asarray(v, dtype=float) @ self.basis.T / TWO_PI

    def scaled(self, L: float) -> "BravaisLattice":
        return BravaisLattice.from_vectors(L * self.u1, L * self.u2)

    def direct_index_bound(self, radius: float) -> Tuple[int, int]:
        """Index range covering every lattice vector of length <= radius"""
        return (
            int(math.ceil(radius * np.linalg.norm(self.v1) / TWO_PI)) + 1,
            int(math.ceil(radius * np.linalg.norm(self.v2) / TWO_PI)) + 1,
        )

    def reciprocal_index_bound(self, radius: float) -> Tuple[int, int]:
        """Index range covering every reciprocal vector of length <= radius"""
        return (
            int(math.ceil(radius * np.linalg.norm(self.u1) / TWO_PI)) + 1,
            int(math.ceil(radius * np.linalg.norm(self.u2) / TWO_PI)) + 1,
        )

    def cells_within(self, radius: float) -> np.ndarray:
        """Integer cell indices (i, j) with |i u1 + j u2| <= radius"""
        n1, n2 = self.direct_index_bound(radius)
        grid = np.array(np.meshgrid(np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1), indexing="ij"))
        cells = grid.reshape(2, -1).T
        keep = np.linalg.norm(self.to_cartesian(cells), axis=1) <= radius * (1.0 + 1e-12)
        return cells[keep]

    def reciprocal_within(self, radius: float, include_zero: bool = True) -> np.ndarray:
        """Miller indices of reciprocal vectors with |v| <= radius"""
        m1, m2 = self.reciprocal_index_bound(radius)
        grid = np.array(np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij"))
        miller = grid.reshape(2, -1).T
        norms = np.linalg.norm(self.reciprocal_vectors(miller), axis=1)
        keep = norms <= radius * (1.0 + 1e-12)
        if not include_zero:
            keep &= norms > 0.0
        return miller[keep]


@dataclass(frozen=True, eq=False)
class SymmetryOp:
    """Affine isometry x -> S x + t"""
    matrix: np.ndarray
    translation: np.ndarray
    name: str = ""

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T + self.translation

    def rotate(self, k) -> np.ndarray:
        """Linear part only, the action on quasi-momenta"""
        return np.asarray(k, dtype=float) @ self.matrix.T

    def compose(self, other: "SymmetryOp") -> "SymmetryOp":
        """self after other"""
        return SymmetryOp(
            self.matrix @ other.matrix,
            self.matrix @ other.translation + self.translation,
            f"{self.name}*{other.name}" if self.name and other.name else self.name or other.name,
        )


def _group_key(op: SymmetryOp, bravais: BravaisLattice) -> Tuple:
    frac = np.round(bravais.to_fractional(op.translation) % 1.0, 8) % 1.0
    return tuple(np.round(op.matrix, 8).ravel() + 0.0) + tuple(frac + 0.0)


def _reduced(op: SymmetryOp, bravais: BravaisLattice) -> SymmetryOp:
    frac = bravais.to_fractional(op.translation)
    frac = frac - np.floor(frac + GEOMETRY_TOL)
    return SymmetryOp(op.matrix, bravais.to_cartesian(frac), op.name)


def close_group(generators: Sequence[SymmetryOp], bravais: BravaisLattice, depth: int = 12) -> List[SymmetryOp]:
    """Closure of the generators under composition, modulo lattice translations"""
    identity = SymmetryOp(np.eye(2), np.zeros(2), "identity")
    elements: Dict[Tuple, SymmetryOp] = {_group_key(identity, bravais): identity}
    frontier = [identity]
    for _ in range(depth):
        fresh = []
        for g in frontier:
            for h in generators:
                candidate = _reduced(h.compose(g), bravais)
                key = _group_key(candidate, bravais)
                if key not in elements:
                    elements[key] = candidate
                    fresh.append(candidate)
        frontier = fresh
        if not frontier:
            break
    if frontier:
        logger.warning(f"📐 Group closure stopped at depth {depth} with {len(elements)} elements")
    return [elements[key] for key in sorted(elements)]


@dataclass(frozen=True, eq=False)
class MotifLattice:
    bravais: BravaisLattice
    shifts: np.ndarray
    group: Tuple[SymmetryOp, ...]
    name: str = "custom"

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float)
        if shifts.ndim != 2 or shifts.shape[1] != 2 or len(shifts) == 0:
            raise LatticeError("motif shifts must be a non-empty list of 2-vectors")
        for i in range(len(shifts)):
            for j in range(i + 1, len(shifts)):
                if np.linalg.norm(shifts[i] - shifts[j]) < GEOMETRY_TOL:
                    raise LatticeError(f"duplicate motif shift at indices {i} and {j}")
        object.__setattr__(self, "shifts", shifts)

    @property
    def n_sites(self) -> int:
        return len(self.shifts)

    def vertex(self, site: int, cell) -> np.ndarray:
        return self.bravais.to_cartesian(cell) + self.shifts[site]

    def locate(self, x, tol: float = GEOMETRY_TOL) -> Optional[Tuple[int, Tuple[int, int]]]:
        """(site, cell) of the vertex at x, or None if x is not a vertex"""
        x = np.asarray(x, dtype=float)
        for site, shift in enumerate(self.shifts):
            frac = self.bravais.to_fractional(x - shift)
            nearest = np.round(frac)
            if np.all(np.abs(frac - nearest) < tol):
                return site, (int(nearest[0]), int(nearest[1]))
        return None


def scaled(m: MotifLattice, L: float) -> MotifLattice:
    """Dilation x -> L x of the whole motif lattice"""
    if L <= 0.0:
        raise LatticeError("lattice scale must be positive")
    group = tuple(SymmetryOp(g.matrix, L * g.translation, g.name) for g in m.group)
    return MotifLattice(m.bravais.scaled(L), L * m.shifts, group, m.name)


def validate_group(m: MotifLattice) -> None:
    """Raise if a group element fails to map the vertex set onto itself"""
    for g in m.group:
        if np.max(np.abs(g.matrix.T @ g.matrix - np.eye(2))) > 1e-9:
            raise LatticeError(f"symmetry element {g.name or '?'} is not orthogonal")
        images = m.bravais.to_fractional(m.bravais.basis @ g.matrix.T)
        if np.max(np.abs(images - np.round(images))) > GEOMETRY_TOL:
            raise LatticeError(f"symmetry element {g.name or '?'} does not preserve the lattice")
        for site in range(m.n_sites):
            if m.locate(g.apply(m.shifts[site])) is None:
                raise LatticeError(f"symmetry element {g.name or '?'} does not preserve the lattice")


@dataclass(frozen=True)
class NeighborShells:
    d0: float
    d1: float
    nearest: Tuple[Edge, ...]
    second: Tuple[Edge, ...]
    radius: float


def neighbor_shells(m: MotifLattice, radius_factor: float = 3.0) -> NeighborShells:
    """Nearest and second-nearest distances over a ball of lattice shells"""
    radius = radius_factor * max(np.linalg.norm(m.bravais.u1), np.linalg.norm(m.bravais.u2))
    span = 2.0 * float(np.max(np.linalg.norm(m.shifts, axis=1)))
    cells = m.bravais.cells_within(radius + span)
    points = m.bravais.to_cartesian(cells)

    records = []
    for s in range(m.n_sites):
        for t in range(m.n_sites):
            dist = np.linalg.norm(points + m.shifts[t] - m.shifts[s], axis=1)
            for idx in np.nonzero((dist > GEOMETRY_TOL) & (dist <= radius))[0]:
                records.append((float(dist[idx]), s, (int(cells[idx, 0]), int(cells[idx, 1])), t))
    records.sort(key=lambda rec: (rec[0], rec[1], rec[2], rec[3]))

    distinct: List[float] = []
    for d, *_ in records:
        if not distinct or d - distinct[-1] > GEOMETRY_TOL * max(1.0, d):
            distinct.append(d)
        if len(distinct) > 2:
            break
    if len(distinct) < 2:
        raise LatticeError("fewer than two neighbor shells inside the search ball")
    d0, d1 = distinct[0], distinct[1]

    def shell(d):
        return tuple((s, cell, t) for dist, s, cell, t in records if abs(dist - d) <= GEOMETRY_TOL * max(1.0, d))

    return NeighborShells(d0=d0, d1=d1, nearest=shell(d0), second=shell(d1), radius=radius)


def canonical_edge(site: int, cell, other: int) -> Edge:
    """Translation class of an unordered pair, independent of orientation"""
    forward = (site, (int(cell[0]), int(cell[1])), other)
    backward = (other, (-int(cell[0]), -int(cell[1])), site)
    return min(forward, backward)


@dataclass(frozen=True)
class EdgeOrbit:
    representative: Edge
    members: Tuple[Edge, ...]

    @property
    def pairs(self) -> Tuple[Edge, ...]:
        """Both orientations of every member, as (site, cell, site) generators"""
        directed = set()
        for s, cell, t in self.members:
            directed.add((s, cell, t))
            directed.add((t, (-cell[0], -cell[1]), s))
        return tuple(sorted(directed))


@dataclass(frozen=True, eq=False)
class EdgeOrbitSet:
    motif: MotifLattice
    d0: float
    orbits: Tuple[EdgeOrbit, ...]

    @property
    def m(self) -> int:
        return len(self.orbits)

    def orbit_of(self, site: int, cell, other: int) -> int:
        key = canonical_edge(site, cell, other)
        for index, orbit in enumerate(self.orbits):
            if key in orbit.members:
                return index
        raise LatticeError(f"pair {key} is not a nearest-neighbor edge")


def _map_edge(m: MotifLattice, g: SymmetryOp, edge: Edge, d0: float) -> Edge:
    s, cell, t = edge
    first = m.locate(g.apply(m.vertex(s, (0, 0))))
    second = m.locate(g.apply(m.vertex(t, cell)))
    if first is None or second is None:
        raise LatticeError(f"symmetry element {g.name or '?'} does not preserve the lattice")
    (s_img, c1), (t_img, c2) = first, second
    image = canonical_edge(s_img, (c2[0] - c1[0], c2[1] - c1[1]), t_img)
    length = np.linalg.norm(m.vertex(image[2], image[1]) - m.vertex(image[0], (0, 0)))
    if abs(length - d0) > GEOMETRY_TOL * max(1.0, d0):
        raise LatticeError(f"symmetry element {g.name or '?'} does not preserve edge lengths")
    return image


def edge_orbits(m: MotifLattice, shells: Optional[NeighborShells] = None) -> EdgeOrbitSet:
    """Partition of the nearest-neighbor edges into orbits of the symmetry group"""
    shells = shells or neighbor_shells(m)
    keys = sorted({canonical_edge(s, cell, t) for s, cell, t in shells.nearest})

    parent = {key: key for key in keys}

    def find(key):
        while parent[key] != key:
            parent[key] = parent[parent[key]]
            key = parent[key]
        return key

    for key in keys:
        for g in m.group:
            image = _map_edge(m, g, key, shells.d0)
            if image not in parent:
                raise LatticeError(f"symmetry element {g.name or '?'} maps an edge outside the neighbor shell")
            a, b = find(key), find(image)
            if a != b:
                parent[max(a, b)] = min(a, b)

    classes: Dict[Edge, List[Edge]] = {}
    for key in keys:
        classes.setdefault(find(key), []).append(key)
    orbits = tuple(EdgeOrbit(representative=min(members), members=tuple(sorted(members)))
                   for _, members in sorted(classes.items()))
    logger.info(f"📐 {m.name}: d0={shells.d0:.6g}, {len(keys)} edge classes in {len(orbits)} orbit(s)")
    return EdgeOrbitSet(motif=m, d0=shells.d0, orbits=orbits)


def special_points(bravais: BravaisLattice) -> Dict[str, np.ndarray]:
    K = (bravais.v1 - bravais.v2) / 3.0
    return {
        "Γ": np.zeros(2),
        "K": K,
        "K'": -K,
        "M": bravais.v1 / 2.0,
    }


@dataclass(frozen=True, eq=False)
class KPath:
    labels: Tuple[str, ...]
    waypoints: np.ndarray
    kpoints: np.ndarray
    arc_length: np.ndarray
    segment_labels: Tuple[str, ...]
    waypoint_indices: Tuple[int, ...]
    samples_per_segment: int

    def __len__(self) -> int:
        return len(self.kpoints)


def k_path(m: MotifLattice, labels: Sequence, samples_per_segment: int) -> KPath:
    """Piecewise-linear path through special points or raw coordinates"""
    if samples_per_segment < 1:
        raise ConfigError("samples_per_segment must be at least 1")
    if len(labels) < 2:
        raise ConfigError("a k-path needs at least two waypoints")
    points = special_points(m.bravais)
    names, waypoints = [], []
    for label in labels:
        if isinstance(label, str):
            if label not in LABEL_ALIASES:
                raise LatticeError(f"unknown k-point label {label!r}")
            name = LABEL_ALIASES[label]
            names.append(name)
            waypoints.append(points[name])
        else:
            coords = np.asarray(label, dtype=float)
            if coords.shape != (2,):
                raise LatticeError(f"unknown k-point label {label!r}")
            names.append(f"({coords[0]:.6g},{coords[1]:.6g})")
            waypoints.append(coords)

    n = samples_per_segment
    kpoints, segment_labels, waypoint_indices = [], [], []
    for j in range(len(waypoints) - 1):
        start, end = waypoints[j], waypoints[j + 1]
        waypoint_indices.append(len(kpoints))
        for i in range(n):
            kpoints.append(start + (i / n) * (end - start) if i else start.copy())
            segment_labels.append(f"{names[j]}-{names[j + 1]}")
    waypoint_indices.append(len(kpoints))
    kpoints.append(waypoints[-1].copy())
    segment_labels.append(f"{names[-2]}-{names[-1]}")

    kpoints = np.array(kpoints)
    steps = np.linalg.norm(np.diff(kpoints, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    return KPath(
        labels=tuple(names),
        waypoints=np.array(waypoints),
        kpoints=kpoints,
        arc_length=arc,
        segment_labels=tuple(segment_labels),
        waypoint_indices=tuple(waypoint_indices),
        samples_per_segment=n,
    )


def monkhorst_pack(bravais: BravaisLattice, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gamma-centred n x n grid folded to fractional coordinates in (-1/2, 1/2]"""
    if n < 1:
        raise ConfigError("k-grid size must be positive")
    frac = np.arange(n) / n
    frac = np.where(frac > 0.5, frac - 1.0, frac)
    f1, f2 = np.meshgrid(frac, frac, indexing="ij")
    miller = np.column_stack([f1.ravel(), f2.ravel()])
    kpoints = bravais.reciprocal_vectors(miller)
    weights = np.full(len(kpoints), 1.0 / (n * n))
    return kpoints, weights


# =============================================================================
# PRESETS AND CONFIG FILES
# =============================================================================

def _rotation(degrees: float) -> np.ndarray:
    angle = np.deg2rad(degrees)
    c, s = np.cos(angle), np.sin(angle)
    # round-off zeros from multiples of 90 degrees
    matrix = np.array([[c, -s], [s, c]])
    matrix[np.abs(matrix) < 1e-15] = 0.0
    return matrix


def _generator_from_mapping(entry: Dict) -> SymmetryOp:
    if "matrix" in entry:
        matrix = np.asarray(entry["matrix"], dtype=float)
    elif "rotation_degrees" in entry:
        matrix = _rotation(float(entry["rotation_degrees"]))
    else:
        raise ConfigError("symmetry generator needs 'matrix' or 'rotation_degrees'")
    if matrix.shape != (2, 2):
        raise ConfigError("symmetry generator matrix must be 2x2")
    if "translation" in entry:
        translation = np.asarray(entry["translation"], dtype=float)
    elif "center" in entry:
        center = np.asarray(entry["center"], dtype=float)
        translation = center - matrix @ center
    else:
        translation = np.zeros(2)
    return SymmetryOp(matrix, translation, str(entry.get("name", "")))


def load_lattice(entry: Dict, name: str = "custom") -> MotifLattice:
    """Build and validate a motif lattice from the documented mapping schema"""
    try:
        bravais = BravaisLattice.from_vectors(entry["u1"], entry["u2"])
        shifts = np.asarray(entry.get("shifts", [[0.0, 0.0]]), dtype=float)
    except KeyError as e:
        raise ConfigError(f"lattice definition is missing key {e}") from e
    generators = [_generator_from_mapping(g) for g in entry.get("generators", [])]
    group = close_group(generators, bravais, int(entry.get("closure_depth", 12)))
    motif = MotifLattice(bravais, shifts, tuple(group), name)
    validate_group(motif)
    logger.debug(f"📐 Loaded lattice {name}: N={motif.n_sites}, |G|={len(group)}")
    return motif


@lru_cache(maxsize=1)
def _load_presets() -> Dict:
    with open(PRESETS_PATH, "r", encoding="utf-8") as f:
        return json.load(f)["presets"]


def preset_names() -> List[str]:
    return sorted(_load_presets())


def preset(name: str) -> MotifLattice:
    presets = _load_presets()
    if name not in presets:
        raise ConfigError(f"unknown lattice preset {name!r}; known presets: {', '.join(sorted(presets))}")
    return load_lattice(presets[name], name)


def honeycomb() -> MotifLattice:
    """Unit honeycomb: |u_i| = 1, sites a = (1/(2 sqrt 3), 0) and b = -a"""
    return preset("honeycomb")


def with_group(m: MotifLattice, group: Sequence[SymmetryOp]) -> MotifLattice:
    """Same geometry with a different symmetry group"""
    motif = MotifLattice(m.bravais, m.shifts, tuple(group), m.name)
    validate_group(motif)
    return motif
