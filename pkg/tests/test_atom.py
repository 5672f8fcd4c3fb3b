import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tools.atom import (
    BoundState,
    PseudoPotential,
    RadialPotential,
    TailKind,
    classify_tail,
    decay_check,
    grid_convergence,
    hartree_matrix,
    ionization_check,
    lowest_radial_eigenpair,
    make_grid,
    radial_coulomb,
    trial_energy,
    vmf_far_field,
)
from tools.errors import ConfigError, SolverError


def hydrogen_eigenvalue(n: int, r_max: float = 30.0) -> float:
    grid = make_grid(n, r_max)
    return lowest_radial_eigenpair(RadialPotential(np.zeros(n), charge=1.0), grid).lowest


def test_grid_masses_cover_the_disc():
    grid = make_grid(200, 10.0)
    assert grid.integrate(np.ones(grid.n)) == pytest.approx(math.pi * 100.0)
    assert grid.nodes[0] > 0.0 and grid.faces[-1] == pytest.approx(10.0)
    with pytest.raises(ConfigError):
        make_grid(4, 10.0)


def test_hydrogen_ground_state():
    grid = make_grid(2000, 30.0)
    pair = lowest_radial_eigenpair(RadialPotential(np.zeros(grid.n), charge=1.0), grid)
    assert pair.state is BoundState.BOUND
    assert pair.lowest == pytest.approx(-1.0, abs=2e-4)
    exact = math.sqrt(2.0 / math.pi) * np.exp(-grid.nodes)
    assert grid.integrate(pair.orbital ** 2) == pytest.approx(1.0)
    assert np.max(np.abs(pair.orbital - exact)) < 5e-3
    # second level of the 2D hydrogen series -1 / (n - 1/2)^2 / 4 with n = 2
    assert pair.eigenvalues[1] == pytest.approx(-1.0 / 9.0, abs=2e-3)


def test_hydrogen_grid_convergence():
    study = grid_convergence(hydrogen_eigenvalue, [250, 500, 1000])
    assert study.order >= 1.8
    assert study.extrapolated == pytest.approx(-1.0, abs=1e-4)
    with pytest.raises(ConfigError):
        grid_convergence(hydrogen_eigenvalue, [100, 300, 900])


def test_deep_well_is_deeply_bound():
    grid = make_grid(1500, 10.0)
    well = np.where(grid.nodes < 1.0, -50.0, 0.0)
    pair = lowest_radial_eigenpair(RadialPotential(well), grid)
    assert pair.lowest < -25.0


def test_repulsive_potential_has_no_bound_state():
    grid = make_grid(400, 20.0)
    pair = lowest_radial_eigenpair(RadialPotential(np.ones(grid.n)), grid)
    assert pair.state is BoundState.NONE


def test_radial_coulomb_matches_quadrature():
    """Potential of a Gaussian density against a direct 2D integral"""
    grid = make_grid(1500, 12.0)
    rho = np.exp(-grid.nodes ** 2)
    potential = radial_coulomb(rho, grid)

    def direct(r):
        def integrand(phi, s):
            return s * math.exp(-s * s) / math.sqrt(r * r + s * s - 2.0 * r * s * math.cos(phi) + 1e-300)
        return integrate.dblquad(integrand, 0.0, 8.0, 0.0, 2.0 * math.pi, epsabs=1e-10, epsrel=1e-9)[0]

    for r in (0.5, 1.3, 3.0):
        index = int(np.argmin(np.abs(grid.nodes - r)))
        assert potential[index] == pytest.approx(direct(grid.nodes[index]), abs=1e-4)


def test_radial_coulomb_far_field():
    grid = make_grid(800, 40.0)
    rho = np.exp(-2.0 * grid.nodes)
    rho /= grid.integrate(rho)
    potential = radial_coulomb(rho, grid)
    far = grid.nodes > 20.0
    np.testing.assert_allclose(potential[far] * grid.nodes[far], 1.0, atol=2e-3)


def test_negative_density_rejected():
    grid = make_grid(50, 5.0)
    with pytest.raises(SolverError):
        radial_coulomb(-np.ones(grid.n), grid)
    with pytest.raises(ConfigError):
        radial_coulomb(np.ones(grid.n + 1), grid)


def test_hartree_matrix_is_cached():
    assert hartree_matrix(60, 6.0) is hartree_matrix(60, 6.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 8.0), st.floats(0.3, 2.0))
def test_pseudopotential_bump(eta, radius):
    Vpp = PseudoPotential(eta=eta, radius=radius)
    assert Vpp(0.0) == pytest.approx(-eta)
    assert Vpp(radius) == 0.0 and Vpp(2.0 * radius) == 0.0
    # zero-frequency Hankel transform is the integral -eta pi R^2 / 3
    assert Vpp.fourier(0.0) == pytest.approx(-eta * math.pi * radius ** 2 / 3.0, rel=1e-10)


def test_reference_atom(reference_atom):
    atom = reference_atom
    assert atom.state is BoundState.BOUND
    assert atom.residual < 1e-9
    assert atom.mu > 0.0
    assert atom.grid.integrate(atom.v ** 2) == pytest.approx(1.0)
    assert np.all(atom.v > 0.0)
    assert atom.gap > 0.0
    # the energy trace settles
    assert abs(atom.energy_trace[-1] - atom.energy) < 1e-8
    payload = atom.to_dict()
    assert payload["state"] == "bound" and payload["I1"] == atom.energy


def test_solution_is_variational(reference_atom, small_grid):
    atom = reference_atom
    ground = trial_energy(atom.v, atom.pseudo, small_grid)
    assert ground == pytest.approx(atom.energy, abs=1e-6)
    trial = np.exp(-0.8 * small_grid.nodes)
    assert trial_energy(trial, atom.pseudo, small_grid) > ground


def test_decay_envelope(reference_atom):
    report = decay_check(reference_atom)
    assert report.passed
    assert report.slope == pytest.approx(reference_atom.decay_rate, rel=0.05)


def test_far_field_is_quadrupolar(reference_atom):
    report = vmf_far_field(reference_atom)
    assert report.tail is TailKind.QUADRUPOLAR
    assert 0.9 <= report.ratio <= 1.1


def test_hydrogen_without_screening_is_coulombic(reference_atom):
    bare = -1.0 / reference_atom.grid.nodes
    report = vmf_far_field(reference_atom, potential=bare)
    assert report.tail is TailKind.COULOMBIC


def test_classify_tail():
    r = np.linspace(5.0, 10.0, 50)
    assert classify_tail(r, 2.0 / r ** 3)[1] is TailKind.QUADRUPOLAR
    assert classify_tail(r, np.exp(-r))[1] is TailKind.OTHER


def test_ionization_threshold(reference_atom):
    def family(eta):
        return PseudoPotential(eta=eta - 100.0, radius=1.0)

    report = ionization_check(reference_atom, family, lower=0.0, upper=200.0, tol=1e-2)
    assert 0.0 < report.threshold < 200.0
    assert report.upper - report.lower <= 1e-2
    with pytest.raises(SolverError):
        ionization_check(reference_atom, family, lower=150.0, upper=200.0)
