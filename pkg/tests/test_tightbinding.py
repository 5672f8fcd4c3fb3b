import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tools.errors import InsufficientSamplesError, LatticeError
from tools.lattice2d import edge_orbits, k_path, preset, special_points
from tools.tightbinding import (
    TBModel,
    bloch_matrix,
    cone_samples,
    dirac_report,
    tb_bands,
    tunneling_coefficient,
    wallace_dispersion,
)

coordinate = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="module")
def wallace(hexagonal):
    return TBModel(mu_L=0.0, thetas=(-1.0,), orbit_set=edge_orbits(hexagonal), motif=hexagonal)


def test_wallace_closed_form(hexagonal):
    points = special_points(hexagonal.bravais)
    for label in ("K", "K'"):
        lower, upper = wallace_dispersion(points[label])
        assert abs(lower) < 1e-12 and abs(upper) < 1e-12
    assert wallace_dispersion(points["Γ"]) == pytest.approx((-3.0, 3.0), abs=1e-12)
    assert wallace_dispersion(points["M"]) == pytest.approx((-1.0, 1.0), abs=1e-12)


def test_model_reproduces_wallace(hexagonal, wallace):
    path = k_path(hexagonal, ["Γ", "K", "M", "Γ"], 12)
    bands = tb_bands(wallace, path)
    expected = np.array([wallace_dispersion(k) for k in path.kpoints])
    np.testing.assert_allclose(bands.eigenvalues, expected, atol=1e-12)
    assert len(bands.rows()) == len(path)


@settings(max_examples=30)
@given(coordinate, coordinate)
def test_bloch_matrix_is_hermitian(kx, ky):
    m = preset("kagome")
    orbits = edge_orbits(m)
    B = bloch_matrix(m, orbits, 0, [kx, ky])
    np.testing.assert_allclose(B, B.conj().T, atol=1e-12)


@settings(max_examples=30)
@given(coordinate, coordinate, st.floats(-2.0, 2.0), st.floats(-3.0, 3.0))
def test_bipartite_spectrum_is_symmetric(kx, ky, mu, theta):
    m = preset("honeycomb")
    model = TBModel(mu_L=mu, thetas=(theta,), orbit_set=edge_orbits(m), motif=m)
    lower, upper = model.eigenvalues([kx, ky])
    assert lower + upper == pytest.approx(-2.0 * mu, abs=1e-9)


def test_orbit_index_out_of_range(hexagonal):
    with pytest.raises(LatticeError):
        bloch_matrix(hexagonal, edge_orbits(hexagonal), 1, [0.0, 0.0])


def test_wrong_hopping_count(hexagonal):
    with pytest.raises(LatticeError):
        TBModel(mu_L=0.0, thetas=(-1.0, -0.5), orbit_set=edge_orbits(hexagonal), motif=hexagonal)


def test_scaled_model_matches_unit_model(hexagonal, wallace):
    stretched = TBModel(mu_L=0.0, thetas=(-1.0,), orbit_set=edge_orbits(hexagonal), motif=hexagonal, L=4.0)
    k = np.array([0.3, -0.7])
    np.testing.assert_allclose(stretched.eigenvalues(k / 4.0), wallace.eigenvalues(k), atol=1e-12)


def test_dirac_slope_at_K(hexagonal, wallace):
    K = special_points(hexagonal.bravais)["K"]
    samples = cone_samples(lambda k: tuple(wallace.eigenvalues(k)), K, [2.5e-3, 5e-3, 1e-2], n_directions=12)
    report = dirac_report(samples)
    assert report.slope == pytest.approx(math.sqrt(3.0) / 2.0, rel=1e-2)
    assert report.gap < 1e-12
    assert report.cone_energy == pytest.approx(0.0, abs=1e-12)
    assert report.n_samples == 36


def test_dirac_fit_needs_directions(hexagonal, wallace):
    K = special_points(hexagonal.bravais)["K"]
    samples = cone_samples(lambda k: tuple(wallace.eigenvalues(k)), K, [1e-3, 2e-3], n_directions=4)
    with pytest.raises(InsufficientSamplesError):
        dirac_report(samples)


def test_tunneling_coefficient():
    assert tunneling_coefficient(0.25, 4.0) == pytest.approx(math.exp(-2.0))
    assert tunneling_coefficient(1.0, 0.0) == 1.0


@settings(max_examples=20, deadline=None)
@given(coordinate, coordinate)
def test_bands_are_invariant_under_the_point_group(hexagonal, wallace, kx, ky):
    k = np.array([kx, ky])
    reference = wallace.eigenvalues(k)
    for op in hexagonal.group:
        np.testing.assert_allclose(wallace.eigenvalues(op.rotate(k)), reference, atol=1e-9)
