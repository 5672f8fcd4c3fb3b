import math

import numpy as np
import pytest

from tools.coulomb2d import exp_self_convolution_exact
from tools.dissociation import (
    OrbitalProfile,
    TheoremReport,
    effective_mu,
    envelope_fit,
    error_decay,
    first_principles_parameters,
    gram_matrix,
    make_cutoff,
    orbital_overlap,
    superposition_sampler,
    tb_from_first_principles,
    theorem_check,
)
from tools.errors import ConfigError, InsufficientSamplesError, SolverError
from tools.lattice2d import edge_orbits, k_path, scaled
from tools.planewave import BandStructure
from tools.tightbinding import TBModel, tb_bands


def exponential(nu, scale=1.0):
    return OrbitalProfile(fn=lambda r: scale * np.exp(-nu * np.asarray(r, dtype=float)), decay=nu, extent=math.inf)


def test_cutoff_radii():
    d0 = 1.0 / math.sqrt(3.0)
    chi = make_cutoff(0.2, d0)
    assert chi.inner == pytest.approx(0.3464, abs=1e-4)
    assert chi.outer == pytest.approx(0.4041, abs=1e-4)
    assert chi(0.3) == 1.0 and chi(0.45) == 0.0
    s = np.linspace(chi.inner, chi.outer, 50)
    assert np.all(np.diff(chi(s)) <= 0.0)
    stretched = chi.scaled(5.0)
    assert stretched.outer == pytest.approx(5.0 * chi.outer)
    for delta in (0.0, 0.5, -0.1):
        with pytest.raises(ConfigError):
            make_cutoff(delta, d0)


@pytest.mark.parametrize("nu, distance", [(1.0, 0.8), (1.0, 3.0), (2.0, 2.5)])
def test_overlap_matches_self_convolution(nu, distance):
    assert orbital_overlap(exponential(nu), distance) == pytest.approx(exp_self_convolution_exact(nu, distance), rel=1e-7)
    with pytest.raises(ConfigError):
        orbital_overlap(exponential(nu), 0.0)


def test_orbital_profile_follows_the_atom(reference_atom):
    orbital = OrbitalProfile.from_atom(reference_atom)
    r = reference_atom.grid.nodes
    inner = r < 5.0
    np.testing.assert_allclose(orbital(r[inner]), reference_atom.v[inner], rtol=1e-8)
    far = orbital(np.array([40.0, 50.0, 60.0]))
    assert np.all(far > 0.0) and np.all(np.diff(far) < 0.0)
    assert orbital.decay == pytest.approx(reference_atom.decay_rate)


def test_gram_matrix_localization(hexagonal):
    nu, L = 2.0, 12.0
    orbital = exponential(nu, scale=math.sqrt(2.0 / math.pi) * nu)
    gram = gram_matrix(orbital, hexagonal, L, radius_factor=3.0)
    nearest = edge_orbits(hexagonal).d0 * L
    assert len(gram.vertices) == len(gram.Q)
    assert np.all(np.diag(gram.Q) == 1.0)
    assert gram.orthonormality_defect() < 1e-10
    assert gram.nearest_overlap(nearest) == pytest.approx(
        2.0 * nu * nu / math.pi * exp_self_convolution_exact(nu, nearest), rel=1e-6)
    assert gram.decay_ratio(nu * nu, L, eps=0.2) <= 1.0
    assert gram.expansion_defect(nearest) < 0.2
    with pytest.raises(ConfigError):
        gram_matrix(orbital, hexagonal, L, radius_factor=1.5)


def test_effective_mu_of_an_isolated_site(hexagonal, reference_atom):
    L = 10.0
    sampler = superposition_sampler(reference_atom, hexagonal, L)
    cutoff = make_cutoff(0.2, edge_orbits(hexagonal).d0, L)
    mu_L = effective_mu(reference_atom, sampler, L * hexagonal.vertex(0, (0, 0)), cutoff)
    assert mu_L == pytest.approx(reference_atom.mu, rel=1e-2)


def test_tb_model_from_the_reference_atom(hexagonal, reference_atom):
    L = 8.0
    model = tb_from_first_principles(reference_atom, reference_atom, hexagonal, L)
    assert model.L == L and len(model.estimates) == 1
    assert model.thetas == (model.estimates[0].theta,)
    assert model.thetas[0] < 0.0
    assert model.mu_L == pytest.approx(reference_atom.mu, rel=5e-2)
    assert model.T_L == pytest.approx(math.exp(-math.sqrt(reference_atom.mu) * L))
    assert model.to_dict()["estimates"][0]["orbit"] == 0


def test_envelope_fit_on_exact_exponentials():
    mu, d0 = 1.5, 1.0 / math.sqrt(3.0)
    Ls = [4.0, 6.0, 8.0, 10.0]
    rate = math.sqrt(mu) * d0
    values = [-3.0 * math.exp(-rate * L) for L in Ls]
    fit = envelope_fit(Ls, values, mu, d0, eps=0.1)
    assert fit.relative_deviation < 1e-10
    assert fit.C_eps == pytest.approx(3.0 * math.exp(-0.1 * rate * 4.0))
    assert fit.lower_constant == pytest.approx(3.0 * math.exp(0.1 * rate * 4.0))
    with pytest.raises(InsufficientSamplesError):
        envelope_fit(Ls[:2], values[:2], mu, d0)
    with pytest.raises(SolverError):
        envelope_fit(Ls, [0.0] + values[1:], mu, d0)


def test_error_decay():
    reports = [
        TheoremReport(L=L, sup_error=math.exp(-L), aligned_error=0.0, offset=0.0, theta_max=math.exp(-0.5 * L),
                      ratio=math.exp(-0.5 * L), aligned_ratio=0.0, uniformity=1.0, per_band=[])
        for L in (4.0, 6.0, 8.0)
    ]
    decay = error_decay(reports)
    assert decay["rate"] == pytest.approx(1.0)
    assert decay["ratio_decreasing"]
    assert decay["aligned_ratios"] == [0.0, 0.0, 0.0]
    with pytest.raises(InsufficientSamplesError):
        error_decay(reports[:1])


def test_theorem_check(hexagonal):
    model = TBModel(mu_L=0.5, thetas=(-0.1,), orbit_set=edge_orbits(hexagonal), motif=hexagonal)
    path = k_path(hexagonal, ["Γ", "K", "M", "Γ"], 5)
    exact = tb_bands(model, path).eigenvalues
    shifted = BandStructure(path=path, eigenvalues=np.column_stack([exact + 0.02, exact[:, -1] + 5.0]))
    report = theorem_check(model, shifted, path)
    assert report.offset == pytest.approx(0.02)
    assert report.aligned_error < 1e-12
    assert report.sup_error == pytest.approx(0.02)
    assert report.ratio == pytest.approx(0.2)
    assert report.aligned_ratio < 1e-10
    other = k_path(hexagonal, ["Γ", "M"], 5)
    with pytest.raises(SolverError):
        theorem_check(model, shifted, other)


def test_growing_offset_fails_the_decay_check(hexagonal):
    reports = []
    for L, theta, offset in [(4.0, -0.1, 0.5), (6.0, -0.05, 1.0), (8.0, -0.02, 2.0)]:
        model = TBModel(mu_L=0.5, thetas=(theta,), orbit_set=edge_orbits(hexagonal), motif=hexagonal, L=L)
        path = k_path(scaled(hexagonal, L), ["Γ", "K", "M", "Γ"], 4)
        pw = BandStructure(path=path, eigenvalues=tb_bands(model, path).eigenvalues + offset)
        reports.append(theorem_check(model, pw, path))
    assert [r.ratio for r in reports] == pytest.approx([5.0, 20.0, 100.0])
    assert all(r.aligned_ratio < 1e-9 for r in reports)
    decay = error_decay(reports)
    assert not decay["ratio_decreasing"]
    assert decay["rate"] < 0.0


@pytest.mark.slow
def test_theta_scaling(hexagonal, reference_atom):
    Ls = [4.0, 6.0, 8.0, 10.0]
    thetas = []
    for L in Ls:
        sampler = superposition_sampler(reference_atom, hexagonal, L)
        params = first_principles_parameters(reference_atom, sampler, hexagonal, L)
        thetas.append(params.thetas[0])
    assert all(theta < 0.0 for theta in thetas)
    fit = envelope_fit(Ls, thetas, reference_atom.mu, edge_orbits(hexagonal).d0, eps=0.1)
    assert fit.relative_deviation < 0.15
