# tools/fourier_grid.py

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import fft

from tools.errors import LatticeError
from tools.lattice2d import BravaisLattice

# Coefficients are "plain": f(x) = sum_v c_v exp(i v.x) over the reciprocal lattice.
# Grid layout follows numpy FFT ordering; the Nyquist row/column is kept at zero.


def miller_grid(shape: Tuple[int, int]) -> np.ndarray:
    """Integer Miller indices of every FFT slot, shape (n1, n2, 2)"""
    m1 = np.rint(fft.fftfreq(shape[0]) * shape[0]).astype(int)
    m2 = np.rint(fft.fftfreq(shape[1]) * shape[1]).astype(int)
    return np.stack(np.meshgrid(m1, m2, indexing="ij"), axis=-1)


def nyquist_mask(shape: Tuple[int, int]) -> np.ndarray:
    miller = miller_grid(shape)
    mask = np.zeros(shape, dtype=bool)
    for axis, n in enumerate(shape):
        if n % 2 == 0:
            mask |= np.abs(miller[..., axis]) == n // 2
    return mask


def real_space_points(lattice: BravaisLattice, shape: Tuple[int, int]) -> np.ndarray:
    """x_ab = (a/n1) u1 + (b/n2) u2, shape (n1, n2, 2)"""
    f1 = np.arange(shape[0]) / shape[0]
    f2 = np.arange(shape[1]) / shape[1]
    F1, F2 = np.meshgrid(f1, f2, indexing="ij")
    return F1[..., None] * lattice.u1 + F2[..., None] * lattice.u2


def even_fast_length(n: int) -> int:
    size = fft.next_fast_len(max(int(n), 2))
    while size % 2:
        size = fft.next_fast_len(size + 1)
    return size


@dataclass(frozen=True, eq=False)
class FourierField:
    lattice: BravaisLattice
    coefficients: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coefficients.shape

    @classmethod
    def zeros(cls, lattice: BravaisLattice, shape: Tuple[int, int]) -> "FourierField":
        return cls(lattice, np.zeros(shape, dtype=complex))

    @classmethod
    def constant(cls, lattice: BravaisLattice, shape: Tuple[int, int], value: float) -> "FourierField":
        coefficients = np.zeros(shape, dtype=complex)
        coefficients[0, 0] = value
        return cls(lattice, coefficients)

    @classmethod
    def from_function(cls, lattice: BravaisLattice, shape: Tuple[int, int],
                      fn: Callable[[np.ndarray], np.ndarray]) -> "FourierField":
        """Fill every non-Nyquist slot with fn(reciprocal vectors of shape (n1, n2, 2))"""
        vectors = lattice.reciprocal_vectors(miller_grid(shape))
        coefficients = np.asarray(fn(vectors), dtype=complex)
        coefficients = np.where(nyquist_mask(shape), 0.0, coefficients)
        return cls(lattice, coefficients)

    @classmethod
    def from_real_space(cls, lattice: BravaisLattice, values: np.ndarray) -> "FourierField":
        coefficients = fft.fft2(values) / values.size
        coefficients[nyquist_mask(values.shape)] = 0.0
        return cls(lattice, coefficients)

    def vectors(self) -> np.ndarray:
        return self.lattice.reciprocal_vectors(miller_grid(self.shape))

    def coefficient(self, m1: int, m2: int) -> complex:
        n1, n2 = self.shape
        if abs(m1) >= n1 // 2 or abs(m2) >= n2 // 2:
            return 0.0j
        return complex(self.coefficients[m1 % n1, m2 % n2])

    def to_real_space(self) -> np.ndarray:
        values = fft.ifft2(self.coefficients) * self.coefficients.size
        return values.real

    def evaluate(self, points) -> np.ndarray:
        """Direct synthesis at arbitrary points, shape (..., 2)"""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, 2)
        vectors = self.vectors().reshape(-1, 2)
        coefficients = self.coefficients.ravel()
        keep = coefficients != 0.0
        phases = np.exp(1j * flat @ vectors[keep].T)
        return (phases @ coefficients[keep]).real.reshape(points.shape[:-1])

    def mean(self) -> float:
        return float(self.coefficients[0, 0].real)

    def l2_norm(self) -> float:
        """L2 norm over one cell, sqrt(|cell| sum |c_v|^2)"""
        return float(np.sqrt(self.lattice.cell_area * np.sum(np.abs(self.coefficients) ** 2)))

    def hermitian_defect(self) -> float:
        """max |c_{-v} - conj(c_v)|"""
        mirrored = np.roll(np.flip(self.coefficients, axis=(0, 1)), shift=(1, 1), axis=(0, 1))
        return float(np.max(np.abs(mirrored - np.conj(self.coefficients))))

    def _check(self, other: "FourierField"):
        if other.shape != self.shape or abs(other.lattice.cell_area - self.lattice.cell_area) > 1e-9 * self.lattice.cell_area:
            raise LatticeError("Fourier fields live on different lattices or grids")

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.lattice, self.coefficients + other.coefficients)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.lattice, self.coefficients - other.coefficients)

    def __mul__(self, scale: float) -> "FourierField":
        return FourierField(self.lattice, self.coefficients * scale)

    __rmul__ = __mul__

    def shifted(self, constant: float) -> "FourierField":
        coefficients = self.coefficients.copy()
        coefficients[0, 0] += constant
        return FourierField(self.lattice, coefficients)
