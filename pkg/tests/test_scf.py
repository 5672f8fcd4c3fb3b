import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tools.errors import InsufficientBandsError, SolverError
from tools.lattice2d import preset
from tools.scf import (
    AndersonMixer,
    LinearMixer,
    Phase,
    Placement,
    SCFConfig,
    band_indicators,
    classify,
    fermi_level,
    first_shell_potential,
    initial_density,
    occupations,
    phase_scan,
    rhf_energy,
    scf_loop,
    weak_contrast_check,
)


@pytest.fixture(scope="module")
def small_config():
    return SCFConfig(L=2.0, ecut=25.0, kgrid=3, smearing=5e-2, n_bands=4, scheme="anderson",
                     tol=1e-8, max_iter=80, atom_guess=False)


@pytest.fixture(scope="module")
def converged(hexagonal, small_config):
    return scf_loop(hexagonal, small_config)


def test_fermi_level_splits_a_gap():
    eps = fermi_level(np.array([[0.0, 1.0, 100.0]]), np.array([1.0]), 1.0, 1e-2)
    assert eps == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5.0, 5.0), min_size=6, max_size=6), st.floats(0.2, 2.8))
def test_fermi_level_counts_electrons(values, target):
    eigenvalues = np.sort(np.array(values).reshape(2, 3), axis=1)
    eigenvalues = np.column_stack([eigenvalues, np.full(2, 50.0)])
    weights = np.array([0.5, 0.5])
    eps = fermi_level(eigenvalues, weights, target, 5e-2)
    count = weights @ occupations(eigenvalues, eps, 5e-2).sum(axis=1)
    assert count == pytest.approx(target, abs=1e-9)


def test_fermi_level_needs_an_empty_band():
    with pytest.raises(InsufficientBandsError):
        fermi_level(np.array([[0.0, 1.0]]), np.array([1.0]), 1.5, 1e-2)


def _iterate(mixer, steps):
    A = np.diag([0.5, -0.3, 0.2, 0.45])
    b = np.array([1.0, -2.0, 0.5, 3.0])
    fixed = np.linalg.solve(np.eye(4) - A, b)
    x = np.zeros(4)
    for _ in range(steps):
        x = mixer.update(x, A @ x + b)
    return np.max(np.abs(x - fixed))


def test_mixers_reach_a_linear_fixed_point():
    assert _iterate(LinearMixer(0.5), 80) < 1e-6
    assert _iterate(AndersonMixer(0.5, history=5), 15) < 1e-8


def test_initial_density_counts(hexagonal, reference_atom):
    uniform = initial_density(hexagonal, 2.0, 1.0, (16, 16))
    area = hexagonal.bravais.scaled(2.0).cell_area
    assert uniform.mean() * area == pytest.approx(1.0)
    atomic = initial_density(hexagonal, 2.0, 1.0, (16, 16), reference_atom)
    assert atomic.mean() * area == pytest.approx(1.0)
    assert atomic.hermitian_defect() < 1e-12


def test_free_run_takes_one_iteration(hexagonal, small_config):
    config = small_config.model_copy(update={"potential_scale": 0.0, "potential_shift": 0.3})
    state = scf_loop(hexagonal, config)
    assert state.converged and state.iterations == 1
    assert state.electron_count() == pytest.approx(config.target, abs=1e-8)
    report = rhf_energy(state)
    assert report.external == 0.0 and report.hartree == 0.0
    assert report.discrepancy < 1e-8


def test_scf_converges(converged, small_config):
    state = converged
    assert state.converged
    assert state.residuals[-1] < small_config.tol
    assert state.electron_count() == pytest.approx(small_config.target, abs=1e-8)
    summary = state.summary()
    assert summary["converged"] and summary["iterations"] == state.iterations


def test_energy_routes_agree(converged):
    report = rhf_energy(converged)
    assert report.hartree > 0.0
    assert report.discrepancy < 1e-5
    assert report.to_dict()["total"] == report.total


def test_threads_do_not_change_the_state(hexagonal, small_config):
    config = small_config.model_copy(update={"max_iter": 3})
    serial = scf_loop(hexagonal, config, threads=1)
    threaded = scf_loop(hexagonal, config, threads=3)
    np.testing.assert_allclose(serial.eigenvalues, threaded.eigenvalues, atol=1e-12)


def test_unconverged_energy_is_refused(hexagonal, small_config):
    state = scf_loop(hexagonal, small_config.model_copy(update={"max_iter": 1}))
    assert not state.converged
    with pytest.raises(SolverError):
        rhf_energy(state)


@pytest.mark.parametrize(
    "fermi, cone, overlap, gap_k, expected",
    [
        (0.0, 0.5, -0.2, 0.0, Phase.METAL),
        (0.5, 0.5, 0.1, 1e-3, Phase.SEMIMETAL),
        (0.5, 0.5, 0.1, 0.5, Phase.INSULATOR),
        (0.0, 0.5, 0.1, 1e-3, Phase.INSULATOR),
    ],
)
def test_classify(fermi, cone, overlap, gap_k, expected):
    assert classify(fermi, cone, overlap, gap_k, 1e-2) is expected


def test_band_indicators():
    kpoints = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    bands = np.array([[-1.0, 2.0], [0.0, 0.0], [-0.5, 1.0]])
    cone, overlap, gap_k, min_gap = band_indicators(bands, kpoints, kpoints[1], 1)
    assert cone == 0.0 and gap_k == 0.0 and min_gap == 0.0
    assert overlap == pytest.approx(0.0 - (-0.5))


def test_phase_scan_records_failures(hexagonal, small_config):
    template = small_config.model_copy(update={"n_bands": 1})
    reports = phase_scan(hexagonal, [1.0], template)
    assert len(reports) == 1
    assert reports[0].phase is None and reports[0].error
    assert math.isnan(reports[0].fermi_level)
    assert reports[0].to_dict()["phase"] is None


@pytest.mark.parametrize("c, expected", [(0.1, Placement.BANDS_1_2), (-0.1, Placement.BANDS_2_3), (0.0, Placement.TRIPLE)])
def test_weak_contrast_placement(hexagonal, c, expected):
    potential = first_shell_potential(hexagonal.bravais, c, (8, 8))
    report = weak_contrast_check(potential, 60.0)
    assert report.placement is expected
    assert report.c11 == pytest.approx(c)


@pytest.mark.slow
def test_weak_contrast_of_the_mean_field():
    m = preset("honeycomb")
    L = 0.25
    config = SCFConfig(L=L, ecut=200.0 / L ** 2, kgrid=6, n_bands=4, scheme="anderson", tol=1e-7,
                       max_iter=100, atom_guess=False)
    state = scf_loop(m, config)
    assert state.converged
    report = weak_contrast_check(state.potential, config.ecut)
    assert report.c11 > 0.0
    assert report.placement is Placement.BANDS_1_2


@pytest.mark.slow
def test_default_run_residual_shrinks(hexagonal, reference_atom):
    config = SCFConfig(L=2.0, tol=1e-30, max_iter=30)
    state = scf_loop(hexagonal, config, atom=reference_atom)
    assert len(state.residuals) == 30
    assert state.residuals[29] < state.residuals[4]
