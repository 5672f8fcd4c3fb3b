import os

import pytest

from knowledge.artifact_store import ArtifactStore
from main import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main

DIRAC_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "dirac.yaml")


def test_dirac_run_writes_artifacts(tmp_path):
    out = tmp_path / "dirac"
    assert main(["dirac", "--config", DIRAC_CONFIG, "--out", str(out)]) == EXIT_OK
    report = ArtifactStore.read_json(str(out / "dirac.json"))
    assert report["command"] == "dirac"
    assert report["data"]["slope"] == pytest.approx(3.0 ** 0.5 / 2.0, rel=1e-2)
    manifest = ArtifactStore.read_json(str(out / "manifest.json"))
    assert manifest["data"]["files"] == ["dirac.json"]
    assert manifest["config_hash"] == report["config_hash"]


def test_thread_count_does_not_change_artifacts(tmp_path):
    texts = []
    for threads in ("1", "3"):
        out = tmp_path / f"threads{threads}"
        assert main(["dirac", "--config", DIRAC_CONFIG, "--out", str(out), "--threads", threads]) == EXIT_OK
        texts.append((out / "dirac.json").read_text(encoding="utf-8"))
    assert texts[0] == texts[1]


def test_invalid_config_exits_with_config_code(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("kind: dirac\ndirac:\n  n_directions: 0\n", encoding="utf-8")
    assert main(["dirac", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert main(["dirac", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_solver_failure_exits_with_solver_code(tmp_path):
    path = tmp_path / "sparse.yaml"
    path.write_text("kind: dirac\ndirac:\n  radii: [1.0e-3]\n  n_directions: 1\n", encoding="utf-8")
    assert main(["dirac", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_SOLVER


def test_environment_settings(tmp_path, monkeypatch):
    out = tmp_path / "env-out"
    monkeypatch.setenv("BANDS2D_OUT", str(out))
    monkeypatch.setenv("BANDS2D_THREADS", "2")
    assert main(["dirac", "--config", DIRAC_CONFIG]) == EXIT_OK
    assert os.path.exists(out / "dirac.json")
    monkeypatch.setenv("BANDS2D_THREADS", "many")
    assert main(["dirac", "--config", DIRAC_CONFIG]) == EXIT_CONFIG
