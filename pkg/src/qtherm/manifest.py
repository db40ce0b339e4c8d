"""Run manifests: the record that makes a CSV reproducible.

A manifest stores the fully resolved configuration (every "auto" replaced by
the value the run actually used: k_max, depth, dt, grids, solver knobs), the
convergence evidence backing those choices, and sha256 checksums of the
written outputs.  Replaying a manifest re-executes from the resolved config
and must reproduce the CSV byte-for-byte; wall time and software versions are
recorded for the paper trail but excluded from that contract.
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def software_stamp() -> dict:
    return {
        "qtherm": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


@dataclass
class RunManifest:
    """Everything needed to reproduce one run's CSV.

    resolved_config: the config mapping with all autos materialized —
        feeding it back through the runner reproduces the data file exactly.
    convergence: evidence for the resolved truncation (ladder entries from
        convergence_sweep, tail weights from k_max auto-selection, ...).
    outputs: name -> {path (relative to the manifest), sha256, bytes}.
    """

    experiment: str
    resolved_config: dict
    convergence: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    software: dict = field(default_factory=software_stamp)
    wall_time_s: float = 0.0
    threads: int = 1
    seed: int | None = None
    mode: str = "run"
    created: str = ""

    def __post_init__(self):
        if not self.created:
            self.created = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def register_output(self, name: str, path: str | Path,
                        base_dir: str | Path) -> None:
        path = Path(path)
        self.outputs[name] = {
            "path": str(path.relative_to(base_dir)),
            "sha256": file_sha256(path),
            "bytes": path.stat().st_size,
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"manifest has unknown fields: {sorted(unknown)}")
        return cls(**data)
