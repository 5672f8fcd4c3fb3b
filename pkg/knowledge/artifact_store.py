# knowledge/artifact_store.py

import csv
import hashlib
import io
import json
import logging
import math
import os
import threading
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "bands2d-artifacts/1"
SIGNIFICANT_DIGITS = 12
MANIFEST_NAME = "manifest.json"


def config_hash(config: Dict) -> str:
    """sha256 of the canonical JSON form of a config mapping"""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def format_number(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def _normalize(value: Any) -> Any:
    """Plain JSON types with floats rounded to the artifact precision"""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_normalize(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(format_number(value))
    if isinstance(value, complex):
        return {"re": _normalize(value.real), "im": _normalize(value.imag)}
    return value


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_number(float(value))
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


class ArtifactStore:
    """Deterministic JSON/CSV writer for one run directory, stamped with config hash and artifact version"""

    def __init__(self, out_dir: str, config: Dict, command: str):
        self.out_dir = out_dir
        self.command = command
        self.config_hash = config_hash(config)
        self._lock = threading.Lock()
        self._files: List[str] = []
        os.makedirs(out_dir, exist_ok=True)

    @property
    def files(self) -> List[str]:
        with self._lock:
            return list(self._files)

    def _stamp(self) -> Dict:
        return {"artifact_version": ARTIFACT_VERSION, "config_hash": self.config_hash, "command": self.command}

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.out_dir, name)
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            logger.error(f"❌ Could not write {path}: {e}")
            raise
        with self._lock:
            if name not in self._files:
                self._files.append(name)
        logger.info(f"💾 Saved {path}")
        return path

    def write_json(self, name: str, payload: Any) -> str:
        document = {**self._stamp(), "data": _normalize(payload)}
        text = json.dumps(document, ensure_ascii=False, indent=2, sort_keys=False)
        return self._write(name, text + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        buffer.write(f"# artifact_version={ARTIFACT_VERSION} config_hash={self.config_hash}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_cell(value) for value in row])
        return self._write(name, buffer.getvalue())

    def write_manifest(self, extra: Optional[Dict] = None) -> str:
        payload = {"files": sorted(self.files)}
        if extra:
            payload.update(extra)
        return self.write_json(MANIFEST_NAME, payload)

    @staticmethod
    def read_json(path: str) -> Dict:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
