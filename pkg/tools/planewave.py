# tools/planewave.py

"""
Plane-wave discretization of the Bloch fibers H(k) = -Delta + V.

Basis functions are exp(i (G + k).x) / sqrt|cell| with |G + k|^2 <= 2 Ecut.
Potentials are FourierFields in plain coefficients, so that
<G| V |G'> = c_{G - G'} and a constant c shifts every band by exactly c.
Coefficients outside the potential's stored grid count as zero.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import fft, linalg

from tools.errors import ConfigError, SolverError
from tools.fourier_grid import FourierField, even_fast_length
from tools.lattice2d import TWO_PI, BravaisLattice, KPath

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True, eq=False)
class PWBasis:
    lattice: BravaisLattice
    k: np.ndarray
    ecut: float
    miller: np.ndarray
    vectors: np.ndarray
    kinetic: np.ndarray

    def __len__(self) -> int:
        return len(self.miller)

    @property
    def extent(self) -> Tuple[int, int]:
        """Largest |Miller index| per axis"""
        return int(np.max(np.abs(self.miller[:, 0]))), int(np.max(np.abs(self.miller[:, 1])))


def build_basis(lattice: BravaisLattice, k, ecut: float) -> PWBasis:
    """All G with |G + k|^2 <= 2 Ecut, ordered by kinetic energy then Miller indices"""
    if ecut <= 0.0:
        raise ConfigError(f"Ecut must be positive, got {ecut}")
    k = np.asarray(k, dtype=float)
    radius = math.sqrt(2.0 * ecut)
    m1, m2 = lattice.reciprocal_index_bound(radius + float(np.linalg.norm(k)))
    grid = np.array(np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij"))
    miller = grid.reshape(2, -1).T
    kinetic = np.sum((lattice.reciprocal_vectors(miller) + k) ** 2, axis=1)
    keep = kinetic <= 2.0 * ecut * (1.0 + 1e-12)
    if not np.any(keep):
        raise SolverError(f"empty plane-wave basis at k={k} for Ecut={ecut}")
    miller, kinetic = miller[keep], kinetic[keep]
    order = np.lexsort((miller[:, 1], miller[:, 0], np.round(kinetic, 10)))
    miller, kinetic = miller[order], kinetic[order]
    return PWBasis(lattice, k, float(ecut), miller, lattice.reciprocal_vectors(miller), kinetic)


def potential_block(basis: PWBasis, potential: FourierField) -> np.ndarray:
    """V[a, b] = c_{G_a - G_b}, zero beyond the stored grid"""
    n1, n2 = potential.shape
    diff = basis.miller[:, None, :] - basis.miller[None, :, :]
    inside = (np.abs(diff[..., 0]) < n1 // 2) & (np.abs(diff[..., 1]) < n2 // 2)
    values = potential.coefficients[diff[..., 0] % n1, diff[..., 1] % n2]
    return np.where(inside, values, 0.0)


def assemble_fiber(basis: PWBasis, potential: Optional[FourierField] = None) -> np.ndarray:
    H = np.diag(basis.kinetic).astype(complex)
    if potential is not None:
        H += potential_block(basis, potential)
    return H


@dataclass(frozen=True, eq=False)
class FiberSpectrum:
    k: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    basis: Optional[PWBasis] = None


def diagonalize(H: np.ndarray, n_bands: int, k=None, basis: Optional[PWBasis] = None,
                vectors: bool = True) -> FiberSpectrum:
    """Lowest n_bands eigenpairs of a Hermitian matrix, ascending"""
    dim = H.shape[0]
    if not 1 <= n_bands <= dim:
        raise ConfigError(f"n_bands={n_bands} must lie in [1, {dim}]")
    try:
        if vectors:
            values, vecs = linalg.eigh(H, subset_by_index=[0, n_bands - 1])
        else:
            values = linalg.eigh(H, subset_by_index=[0, n_bands - 1], eigvals_only=True)
            vecs = None
    except linalg.LinAlgError as e:
        raise SolverError(f"eigensolver failed: {e}") from e
    k = np.zeros(2) if k is None else np.asarray(k, dtype=float)
    return FiberSpectrum(k=k, eigenvalues=values, eigenvectors=vecs, basis=basis)


def solve_fiber(lattice: BravaisLattice, potential: Optional[FourierField], k, ecut: float,
                n_bands: int, vectors: bool = True) -> FiberSpectrum:
    basis = build_basis(lattice, k, ecut)
    H = assemble_fiber(basis, potential)
    return diagonalize(H, min(n_bands, len(basis)), k=k, basis=basis, vectors=vectors)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """Order-preserving map, threaded when threads > 1"""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class BandStructure:
    path: KPath
    eigenvalues: np.ndarray

    def rows(self) -> List[List]:
        return [
            [self.path.segment_labels[i], self.path.arc_length[i], *self.path.kpoints[i], *self.eigenvalues[i]]
            for i in range(len(self.path))
        ]

    def band(self, index: int) -> np.ndarray:
        return self.eigenvalues[:, index]


def band_structure(lattice: BravaisLattice, potential: Optional[FourierField], path: KPath, ecut: float,
                   n_bands: int, threads: int = 1) -> BandStructure:
    """Independent fiber solves along a path on the (already scaled) lattice"""
    def solve(k):
        spectrum = solve_fiber(lattice, potential, k, ecut, n_bands, vectors=False)
        if len(spectrum.eigenvalues) < n_bands:
            raise SolverError(f"basis at k={k} holds fewer than {n_bands} states; raise Ecut")
        return spectrum.eigenvalues

    values = parallel_map(solve, list(path.kpoints), threads)
    logger.info(f"📈 Band structure: {len(path)} k-points, {n_bands} bands, Ecut={ecut}")
    return BandStructure(path=path, eigenvalues=np.array(values))


def fft_shape(lattice: BravaisLattice, ecut: float, k_extent: float = 0.0) -> Tuple[int, int]:
    """Even grid holding every difference of two basis vectors below the Nyquist index"""
    radius = math.sqrt(2.0 * ecut) + k_extent
    m1 = int(math.ceil(radius * np.linalg.norm(lattice.u1) / TWO_PI)) + 1
    m2 = int(math.ceil(radius * np.linalg.norm(lattice.u2) / TWO_PI)) + 1
    return even_fast_length(4 * m1 + 2), even_fast_length(4 * m2 + 2)


def _orbital_grid(basis: PWBasis, coefficients: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Periodic part sum_G c_G exp(i G.x) on the real-space grid"""
    slots = np.zeros(shape, dtype=complex)
    slots[basis.miller[:, 0] % shape[0], basis.miller[:, 1] % shape[1]] = coefficients
    return fft.ifft2(slots) * slots.size


def density_from_states(spectra: Sequence[FiberSpectrum], occupations: Sequence[np.ndarray],
                        weights: Sequence[float], shape: Tuple[int, int], lattice: BravaisLattice) -> FourierField:
    """rho(x) = sum_k w_k sum_n f_nk |psi_nk(x)|^2 synthesized by FFT"""
    values = np.zeros(shape)
    for spectrum, occ, weight in zip(spectra, occupations, weights):
        if spectrum.basis is None or spectrum.eigenvectors is None:
            raise SolverError("density synthesis needs eigenvectors and their basis")
        e1, e2 = spectrum.basis.extent
        if 2 * e1 >= shape[0] // 2 or 2 * e2 >= shape[1] // 2:
            raise SolverError(f"FFT grid {shape} too small for basis extent {(e1, e2)} (aliasing)")
        for n, f in enumerate(occ):
            if f <= 1e-14:
                continue
            psi = _orbital_grid(spectrum.basis, spectrum.eigenvectors[:, n], shape)
            values += weight * f * np.abs(psi) ** 2
    return FourierField.from_real_space(lattice, values / lattice.cell_area)
