import json
import os

import pytest
from pydantic import ValidationError

from flows.run_config import Command, DiracBlock, RunConfig, TBBlock, load_config, read_mapping
from tools.errors import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def test_defaults_without_a_file():
    config = load_config(None, "dirac")
    assert config.kind is Command.DIRAC
    block = config.block()
    assert isinstance(block, DiracBlock)
    assert block.thetas == [-1.0] and block.vertex == "K"


@pytest.mark.parametrize("name", ["atom", "kernel", "bands", "scf", "tb", "dirac", "phase-scan"])
def test_shipped_configs_validate(name):
    config = load_config(os.path.join(CONFIG_DIR, f"{name}.yaml"), name)
    assert config.kind.value == name
    assert config.schema_version == "v1"


def test_json_config(tmp_path):
    path = tmp_path / "tb.json"
    path.write_text(json.dumps({"kind": "tb", "tb": {"Ls": [4.0, 6.0], "gram": False}}), encoding="utf-8")
    block: TBBlock = load_config(str(path), "tb").block()
    assert block.Ls == [4.0, 6.0] and not block.gram
    assert block.source == "superposition"


def test_kind_mismatch(tmp_path):
    path = tmp_path / "atom.yaml"
    path.write_text("kind: atom\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(path), "kernel")


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "atom.yaml"
    path.write_text("kind: atom\natom:\n  nodes: 100\n  grid_points: 5\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_config(str(path), "atom")


def test_comparison_needs_the_scf_source():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"kind": "tb", "tb": {"compare": True}})
    config = RunConfig.model_validate({"kind": "tb", "tb": {"compare": True, "source": "scf"}})
    assert config.block().compare


def test_file_potential_needs_a_path():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"kind": "bands", "bands": {"potential": {"kind": "file"}}})


def test_read_mapping_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_mapping(str(tmp_path / "missing.yaml"))
    broken = tmp_path / "broken.yaml"
    broken.write_text("a: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_mapping(str(broken))
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_mapping(str(listing))
