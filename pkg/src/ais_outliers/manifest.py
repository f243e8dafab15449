"""Run manifest: one JSON file per run directory recording, for every
stage, the effective configuration, input/output checksums, tool version,
and wall time. A run is reconstructible from this file plus the inputs."""

from __future__ import annotations

import json
from pathlib import Path

from .sequence import file_sha256

MANIFEST_NAME = "manifest.json"


class RunManifest:
    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / MANIFEST_NAME
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"stages": {}}

    def record_stage(self, name: str, config_text: str, version: str,
                     inputs: list, outputs: list, wall_seconds: float,
                     extra: dict | None = None) -> None:
        """Record (or replace, on rerun) one stage's provenance."""
        entry = {
            "tool_version": version,
            "wall_seconds": round(wall_seconds, 3),
            "config": config_text,
            "inputs": {str(p): file_sha256(p) for p in inputs},
            "outputs": {str(p): file_sha256(p) for p in outputs},
        }
        if extra:
            entry["extra"] = extra
        self.data["stages"][name] = entry
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def stage(self, name: str) -> dict | None:
        return self.data["stages"].get(name)
