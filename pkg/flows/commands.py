# flows/commands.py

"""Orchestration of every CLI command: run the tools, write artifacts through the store"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from flows.run_config import (
    AtomBlock,
    BandsBlock,
    DiracBlock,
    KernelBlock,
    PhaseScanBlock,
    PotentialBlock,
    RunConfig,
    SCFBlock,
    TBBlock,
    read_mapping,
)
from knowledge.artifact_store import ArtifactStore
from tools.atom import AtomSolution, BoundState, decay_check, ionization_check, ionization_family, scf_atom, vmf_far_field
from tools.coulomb2d import build_kernel, convolution_report, kernel_report, poisson_check
from tools.dissociation import (
    OrbitalProfile,
    envelope_fit,
    error_decay,
    gram_matrix,
    tb_from_first_principles,
    theorem_check,
)
from tools.errors import ConfigError, SolverError
from tools.fourier_grid import FourierField, real_space_points
from tools.lattice2d import BravaisLattice, MotifLattice, edge_orbits, k_path, scaled, special_points
from tools.planewave import band_structure, fft_shape, solve_fiber
from tools.scf import (
    SCFConfig,
    SCFState,
    first_shell_potential,
    phase_scan,
    rhf_energy,
    scf_loop,
    weak_contrast_check,
)
from tools.tightbinding import TBModel, cone_samples, dirac_report, tb_bands

logger = logging.getLogger(__name__)


def solve_atom(block: AtomBlock) -> AtomSolution:
    atom = scf_atom(block.pseudo(), block.grid(), block.mixing, block.tol, block.max_iter)
    logger.info(f"⚛️ Reference atom: mu={atom.mu:.10g}, I1={atom.energy:.10g}, gap={atom.gap:.6g} ({atom.state.value})")
    return atom


def band_header(n_bands: int, prefix: str = "band") -> List[str]:
    return ["segment", "s", "kx", "ky"] + [f"{prefix}{i + 1}" for i in range(n_bands)]


# =============================================================================
# ATOM AND KERNEL
# =============================================================================

def cmd_atom(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: AtomBlock = config.block()
    atom = solve_atom(block)
    payload = atom.to_dict()
    if atom.state is BoundState.BOUND:
        decay = decay_check(atom)
        far = vmf_far_field(atom)
        payload.update({"decay_slope": decay.slope, "decay": decay.to_dict(), "far_field": far.to_dict()})
    else:
        payload.update({"decay_slope": None, "decay": None, "far_field": None})
    if block.ionization and atom.state is BoundState.BOUND:
        report = ionization_check(atom, lambda eta: ionization_family(eta, block.ionization_shift, block.radius),
                                  upper=block.ionization_upper)
        payload["ionization"] = report.to_dict()
    store.write_json("atom.json", payload)
    rows = [[r, v, V] for r, v, V in zip(atom.grid.nodes, atom.v, atom.VMF)]
    store.write_csv("atom.csv", ["r", "v", "VMF"], rows)
    return store.files


def cmd_kernel(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: KernelBlock = config.block()
    motif = block.lattice.motif()
    kern = build_kernel(motif.bravais, block.L, shells=block.shells)
    report = kernel_report(kern, block.n_points, block.seed, block.shells)
    poisson = []
    for width in block.poisson_widths:
        for x in ([0.0, 0.0], 0.37 * kern.lattice.u1 + 0.21 * kern.lattice.u2):
            check = poisson_check(width, kern.lattice, x)
            poisson.append({"width": width, "x": list(x), "lhs": check.lhs, "rhs": check.rhs, "difference": check.difference})
    report["poisson"] = poisson
    report["convolution"] = convolution_report(block.convolution.nus, block.convolution.radii)
    store.write_json("kernel.json", report)
    return store.files


# =============================================================================
# POTENTIALS AND BANDS
# =============================================================================

def load_potential_file(path: str, lattice: BravaisLattice) -> FourierField:
    """Coefficient file: {"shape": [n1, n2], "coefficients": [[m1, m2, re, im], ...]} in plain convention"""
    data = read_mapping(path)
    try:
        shape = tuple(int(n) for n in data["shape"])
        entries = data["coefficients"]
    except KeyError as e:
        raise ConfigError(f"potential file {path} is missing key {e}") from e
    coefficients = np.zeros(shape, dtype=complex)
    for m1, m2, re, im in entries:
        if abs(int(m1)) >= shape[0] // 2 or abs(int(m2)) >= shape[1] // 2:
            raise ConfigError(f"coefficient ({m1}, {m2}) lies outside the {shape} grid")
        coefficients[int(m1) % shape[0], int(m2) % shape[1]] = complex(re, im)
    field = FourierField(lattice, coefficients)
    if field.hermitian_defect() > 1e-12:
        raise ConfigError(f"potential in {path} is not real (coefficients not Hermitian-symmetric)")
    return field


def resolve_potential(block: PotentialBlock, motif: MotifLattice, L: float, ecut: float,
                      atom_block: Optional[AtomBlock] = None, threads: int = 1):
    """Fourier potential on the lattice L, plus the SCF state when one was run"""
    lattice = motif.bravais.scaled(L)
    if block.kind == "zero":
        return None, None
    if block.kind == "first-shell":
        return first_shell_potential(lattice, block.c11, fft_shape(lattice, ecut)), None
    if block.kind == "file":
        return load_potential_file(block.file, lattice), None
    scf_config = (block.scf or SCFConfig()).model_copy(update={"L": L})
    atom = solve_atom(atom_block or AtomBlock()) if scf_config.atom_guess else None
    state = scf_loop(motif, scf_config, atom=atom, threads=threads)
    return state.potential, state


def cmd_bands(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: BandsBlock = config.block()
    motif = block.lattice.motif()
    lattice = motif.bravais.scaled(block.L)
    path = k_path(scaled(motif, block.L), block.path, block.samples_per_segment)
    potential, state = resolve_potential(block.potential, motif, block.L, block.ecut, threads=threads)
    bands = band_structure(lattice, potential, path, block.ecut, block.n_bands, threads)

    header = band_header(block.n_bands)
    rows = bands.rows()
    if block.wallace is not None:
        model = TBModel(mu_L=block.wallace.mu, thetas=(block.wallace.theta,), orbit_set=edge_orbits(motif),
                        motif=motif, L=block.L)
        tb = tb_bands(model, path)
        header += [f"tb{i + 1}" for i in range(tb.eigenvalues.shape[1])]
        rows = [row + list(values) for row, values in zip(rows, tb.eigenvalues)]
    store.write_csv("bands.csv", header, rows)
    summary = {"L": block.L, "ecut": block.ecut, "n_bands": block.n_bands, "potential": block.potential.kind,
               "n_kpoints": len(path), "labels": list(path.labels)}
    if state is not None:
        summary["scf"] = state.summary()
    store.write_json("bands.json", summary)
    return store.files


# =============================================================================
# SCF AND PHASES
# =============================================================================

def _density_rows(state: SCFState):
    values = state.density.to_real_space()
    points = real_space_points(state.lattice, values.shape)
    return [[x, y, rho] for (x, y), rho in zip(points.reshape(-1, 2), values.ravel())]


def cmd_scf(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: SCFBlock = config.block()
    motif = block.lattice.motif()
    atom = solve_atom(block.atom) if block.scf.atom_guess and block.scf.potential_scale > 0.0 else None
    state = scf_loop(motif, block.scf, atom=atom, threads=threads)
    summary = state.summary()
    if state.converged:
        summary["energy"] = rhf_energy(state).to_dict()
    summary["weak_contrast"] = weak_contrast_check(state.potential, block.scf.ecut).to_dict()
    store.write_json("scf.json", summary)

    path = k_path(scaled(motif, block.scf.L), ["Γ", "K", "M", "Γ"], block.samples_per_segment)
    bands = band_structure(state.lattice, state.potential, path, block.scf.ecut, block.band_count, threads)
    store.write_csv("bands.csv", band_header(block.band_count), bands.rows())
    store.write_csv("density.csv", ["x", "y", "rho"], _density_rows(state))
    return store.files


def cmd_phase_scan(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: PhaseScanBlock = config.block()
    motif = block.lattice.motif()
    atom = solve_atom(block.atom) if block.scf.atom_guess else None
    reports = phase_scan(motif, block.Ls, block.scf, atom=atom, samples_per_segment=block.samples_per_segment,
                         threads=threads)
    store.write_json("phase.json", [r.to_dict() for r in reports])
    rows = [[r.L, r.fermi_level, r.cone_energy, r.overlap, r.phase.value if r.phase else "failed"] for r in reports]
    store.write_csv("phase.csv", ["L", "fermi_level", "cone_energy", "overlap", "class"], rows)
    if all(r.phase is None for r in reports):
        raise SolverError("phase scan failed at every scale")
    return store.files


# =============================================================================
# TIGHT BINDING
# =============================================================================

def cmd_tb(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: TBBlock = config.block()
    motif = block.lattice.motif()
    orbit_set = edge_orbits(motif)
    atom = solve_atom(block.atom)
    if atom.state is not BoundState.BOUND:
        raise SolverError("reference atom has no bound state")
    orbital = OrbitalProfile.from_atom(atom)
    compare_ecut = block.compare_ecut or block.scf.ecut
    if block.compare and compare_ecut != block.scf.ecut:
        logger.warning(f"⚠️ Band comparison at Ecut={compare_ecut} differs from the SCF Ecut={block.scf.ecut}")

    models, comparisons, grams = [], [], []
    for L in block.Ls:
        state = None
        if block.source == "scf":
            state = scf_loop(motif, block.scf.model_copy(update={"L": L}), atom=atom, threads=threads)
        model = tb_from_first_principles(atom, state if state is not None else atom, motif, L, block.delta, orbit_set)
        entry = model.to_dict()
        entry["mu"] = atom.mu
        models.append(entry)

        if block.gram:
            gram = gram_matrix(orbital, motif, L, block.gram_radius_factor)
            nearest = orbit_set.d0 * L
            grams.append({
                "L": L,
                "vertices": len(gram.vertices),
                "min_eigenvalue": float(np.linalg.eigvalsh(gram.Q)[0]),
                "nearest_overlap": gram.nearest_overlap(nearest),
                "expansion_defect": gram.expansion_defect(nearest),
                "orthonormality_defect": gram.orthonormality_defect(),
                "decay_ratio": gram.decay_ratio(atom.mu, L, block.eps),
            })

        if block.compare and state is not None:
            path = k_path(scaled(motif, L), ["Γ", "K", "M", "Γ"], block.samples_per_segment)
            pw = band_structure(state.lattice, state.potential, path, compare_ecut, motif.n_sites + 1, threads)
            report = theorem_check(model, pw, path)
            comparisons.append(report)
            tb = tb_bands(model, path)
            header = band_header(pw.eigenvalues.shape[1], "pw") + [f"tb{i + 1}" for i in range(motif.n_sites)]
            rows = [row + list(values) for row, values in zip(pw.rows(), tb.eigenvalues)]
            store.write_csv(f"tb_bands_L{L:g}.csv", header, rows)

    payload: Dict = {"models": models, "gram": grams, "comparisons": [r.to_dict() for r in comparisons]}
    if len(block.Ls) >= 3:
        for index in range(orbit_set.m):
            thetas = [m["thetas"][index] for m in models]
            payload.setdefault("envelope", []).append(
                envelope_fit(block.Ls, thetas, atom.mu, orbit_set.d0, block.eps).to_dict())
    if len(comparisons) >= 2:
        payload["error_decay"] = error_decay(comparisons)
    store.write_json("tb.json", payload)
    return store.files


# =============================================================================
# DIRAC CONES
# =============================================================================

def _pair_evaluator(values: Callable[[np.ndarray], np.ndarray], bands) -> Callable:
    lower, upper = bands

    def evaluate(k):
        e = values(k)
        return float(e[lower]), float(e[upper])

    return evaluate


def cmd_dirac(config: RunConfig, store: ArtifactStore, threads: int = 1) -> List[str]:
    block: DiracBlock = config.block()
    motif = block.lattice.motif()
    lattice = motif.bravais.scaled(block.L)
    points = special_points(lattice)
    if block.vertex not in points:
        raise ConfigError(f"unknown vertex label {block.vertex!r}")
    vertex = points[block.vertex]

    if block.source == "tb":
        model = TBModel(mu_L=block.mu, thetas=tuple(block.thetas), orbit_set=edge_orbits(motif), motif=motif, L=block.L)
        evaluator = _pair_evaluator(model.eigenvalues, block.bands)
    else:
        potential, _ = resolve_potential(block.potential, motif, block.L, block.ecut, block.atom, threads)
        n_bands = max(block.bands) + 1
        evaluator = _pair_evaluator(
            lambda k: solve_fiber(lattice, potential, k, block.ecut, n_bands, vectors=False).eigenvalues, block.bands)

    samples = cone_samples(evaluator, vertex, block.radii, block.n_directions)
    report = dirac_report(samples)
    payload = report.to_dict()
    payload.update({"source": block.source, "L": block.L, "bands": list(block.bands)})
    store.write_json("dirac.json", payload)
    return store.files


COMMANDS = {
    "atom": cmd_atom,
    "kernel": cmd_kernel,
    "bands": cmd_bands,
    "scf": cmd_scf,
    "tb": cmd_tb,
    "dirac": cmd_dirac,
    "phase-scan": cmd_phase_scan,
}
