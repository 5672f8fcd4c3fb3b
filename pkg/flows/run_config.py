# flows/run_config.py

import json
import logging
import os
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tools.atom import PseudoPotential, bump_pseudopotential, make_grid
from tools.errors import ConfigError
from tools.lattice2d import MotifLattice, load_lattice, preset
from tools.scf import SCFConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "v1"
DEFAULT_PATH = ["Γ", "K", "M", "Γ"]


class Command(str, Enum):
    ATOM = "atom"
    KERNEL = "kernel"
    BANDS = "bands"
    SCF = "scf"
    TB = "tb"
    DIRAC = "dirac"
    PHASE_SCAN = "phase-scan"


class Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeBlock(Block):
    preset: str = "honeycomb"
    file: Optional[str] = None

    def motif(self) -> MotifLattice:
        if self.file is None:
            return preset(self.preset)
        return load_lattice(read_mapping(self.file), os.path.splitext(os.path.basename(self.file))[0])


class AtomBlock(Block):
    nodes: int = Field(4000, ge=8)
    r_max: float = Field(40.0, gt=0.0)
    eta: float = 4.0
    radius: float = Field(1.0, gt=0.0)
    mixing: float = Field(0.5, gt=0.0, le=1.0)
    tol: float = Field(1e-9, gt=0.0)
    max_iter: int = Field(500, ge=1)
    ionization: bool = False
    ionization_shift: float = 10.0
    ionization_upper: float = 40.0

    def pseudo(self) -> PseudoPotential:
        return bump_pseudopotential(self.eta, self.radius)

    def grid(self):
        return make_grid(self.nodes, self.r_max)


class ConvolutionBlock(Block):
    nus: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    radii: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 4.0])


class KernelBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    L: float = Field(1.0, gt=0.0)
    n_points: int = Field(10, ge=1)
    seed: int = 0
    shells: int = Field(6, ge=2)
    poisson_widths: List[float] = Field(default_factory=lambda: [0.3, 0.5, 1.0])
    convolution: ConvolutionBlock = Field(default_factory=ConvolutionBlock)


class PotentialBlock(Block):
    kind: Literal["zero", "first-shell", "file", "scf"] = "zero"
    c11: float = 0.1
    file: Optional[str] = None
    scf: Optional[SCFConfig] = None

    @model_validator(mode="after")
    def _check_sources(self):
        if self.kind == "file" and not self.file:
            raise ValueError("potential kind 'file' needs a file")
        return self


class WallaceOverlay(Block):
    mu: float = 0.0
    theta: float = -1.0


class BandsBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    L: float = Field(1.0, gt=0.0)
    ecut: float = Field(150.0, gt=0.0)
    n_bands: int = Field(5, ge=1)
    samples_per_segment: int = Field(30, ge=1)
    path: List[Union[str, Tuple[float, float]]] = Field(default_factory=lambda: list(DEFAULT_PATH))
    potential: PotentialBlock = Field(default_factory=PotentialBlock)
    wallace: Optional[WallaceOverlay] = None


class SCFBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    scf: SCFConfig = Field(default_factory=SCFConfig)
    atom: AtomBlock = Field(default_factory=AtomBlock)
    samples_per_segment: int = Field(30, ge=1)
    band_count: int = Field(5, ge=1)


class TBBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    Ls: List[float] = Field(default_factory=lambda: [4.0, 6.0, 8.0], min_length=1)
    source: Literal["scf", "superposition"] = "superposition"
    delta: float = Field(0.2, gt=0.0, lt=0.5)
    atom: AtomBlock = Field(default_factory=AtomBlock)
    scf: SCFConfig = Field(default_factory=SCFConfig)
    compare: bool = False
    compare_ecut: Optional[float] = Field(None, gt=0.0)
    gram: bool = True
    gram_radius_factor: float = Field(4.0, ge=2.0)
    samples_per_segment: int = Field(20, ge=1)
    eps: float = Field(0.2, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_compare(self):
        if self.compare and self.source != "scf":
            raise ValueError("band comparison needs source 'scf'")
        return self


class DiracBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    source: Literal["tb", "planewave"] = "tb"
    L: float = Field(1.0, gt=0.0)
    mu: float = 0.0
    thetas: List[float] = Field(default_factory=lambda: [-1.0])
    ecut: float = Field(150.0, gt=0.0)
    potential: PotentialBlock = Field(default_factory=lambda: PotentialBlock(kind="first-shell"))
    bands: Tuple[int, int] = (0, 1)
    vertex: str = "K"
    radii: List[float] = Field(default_factory=lambda: [1e-3, 2e-3, 4e-3])
    n_directions: int = Field(12, ge=1)
    atom: AtomBlock = Field(default_factory=AtomBlock)


class PhaseScanBlock(Block):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    Ls: List[float] = Field(default_factory=lambda: [0.5, 2.0, 6.0], min_length=1)
    scf: SCFConfig = Field(default_factory=SCFConfig)
    atom: AtomBlock = Field(default_factory=AtomBlock)
    samples_per_segment: int = Field(30, ge=1)


BLOCKS = {
    Command.ATOM: ("atom", AtomBlock),
    Command.KERNEL: ("kernel", KernelBlock),
    Command.BANDS: ("bands", BandsBlock),
    Command.SCF: ("scf", SCFBlock),
    Command.TB: ("tb", TBBlock),
    Command.DIRAC: ("dirac", DiracBlock),
    Command.PHASE_SCAN: ("phase_scan", PhaseScanBlock),
}


class RunConfig(Block):
    schema_version: Literal["v1"] = SCHEMA_VERSION
    kind: Command
    description: Optional[str] = None
    out: Optional[str] = None
    threads: Optional[int] = Field(None, ge=1)
    atom: Optional[AtomBlock] = None
    kernel: Optional[KernelBlock] = None
    bands: Optional[BandsBlock] = None
    scf: Optional[SCFBlock] = None
    tb: Optional[TBBlock] = None
    dirac: Optional[DiracBlock] = None
    phase_scan: Optional[PhaseScanBlock] = None

    @model_validator(mode="after")
    def _fill_block(self):
        name, model = BLOCKS[self.kind]
        if getattr(self, name) is None:
            setattr(self, name, model())
        return self

    def block(self) -> Any:
        return getattr(self, BLOCKS[self.kind][0])


def read_mapping(path: str) -> Dict:
    """YAML or JSON file holding one mapping"""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f) if path.endswith(".json") else yaml.safe_load(f)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return data


def load_config(path: Optional[str], command: str) -> RunConfig:
    """Validated RunConfig for a command; defaults when no file is given"""
    if path is None:
        return RunConfig(kind=Command(command))
    data = read_mapping(path)
    data.setdefault("kind", command)
    if data["kind"] != command:
        raise ConfigError(f"config {path} is for '{data['kind']}', not '{command}'")
    config = RunConfig.model_validate(data)
    logger.debug(f"Loaded {command} config from {path}")
    return config
