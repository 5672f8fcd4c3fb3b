import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tools.errors import LatticeError
from tools.fourier_grid import FourierField, even_fast_length, miller_grid, nyquist_mask, real_space_points


@pytest.fixture(scope="module")
def cell(hexagonal):
    return hexagonal.bravais.scaled(2.0)


def test_cosine_coefficients(cell):
    points = real_space_points(cell, (16, 16))
    values = 3.0 + np.cos(points @ cell.v1) + 0.5 * np.sin(points @ (cell.v1 + cell.v2))
    field = FourierField.from_real_space(cell, values)
    assert field.mean() == pytest.approx(3.0)
    assert field.coefficient(1, 0) == pytest.approx(0.5)
    assert field.coefficient(-1, 0) == pytest.approx(0.5)
    assert field.coefficient(1, 1) == pytest.approx(-0.25j)
    assert field.hermitian_defect() < 1e-12
    np.testing.assert_allclose(field.to_real_space(), values, atol=1e-12)


def test_direct_synthesis_matches_fft(cell):
    points = real_space_points(cell, (12, 12))
    values = np.exp(np.cos(points @ cell.v2))
    field = FourierField.from_real_space(cell, values)
    off_grid = np.array([[0.123, -0.456], [1.0, 0.3]])
    grid_values = field.to_real_space()
    np.testing.assert_allclose(field.evaluate(points[3, 5]), grid_values[3, 5], atol=1e-10)
    assert field.evaluate(off_grid).shape == (2,)


def test_nyquist_slots_are_zero(cell):
    field = FourierField.from_function(cell, (8, 10), lambda vectors: np.ones(vectors.shape[:-1]))
    mask = nyquist_mask((8, 10))
    assert np.all(field.coefficients[mask] == 0.0)
    assert np.all(field.coefficients[~mask] == 1.0)
    assert field.coefficient(4, 0) == 0.0


def test_miller_grid_follows_fft_order():
    miller = miller_grid((4, 6))
    assert miller.shape == (4, 6, 2)
    assert list(miller[:, 0, 0]) == [0, 1, -2, -1]
    assert list(miller[0, :, 1]) == [0, 1, 2, -3, -2, -1]


def test_constant_norm_and_arithmetic(cell):
    a = FourierField.constant(cell, (8, 8), 2.0)
    b = FourierField.constant(cell, (8, 8), 0.5)
    assert a.l2_norm() == pytest.approx(np.sqrt(cell.cell_area) * 2.0)
    assert (a - b).mean() == pytest.approx(1.5)
    assert (2.0 * b + a).mean() == pytest.approx(3.0)
    assert a.shifted(-2.0).l2_norm() == pytest.approx(0.0)


def test_mismatched_grids_rejected(cell):
    with pytest.raises(LatticeError):
        FourierField.zeros(cell, (8, 8)) + FourierField.zeros(cell, (10, 10))


@given(st.integers(2, 5000))
def test_even_fast_length(n):
    size = even_fast_length(n)
    assert size >= n and size % 2 == 0
