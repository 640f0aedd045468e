"""Run directories, manifests, and plot-ready file writers.

Every CLI command writes its artifacts into a staging directory that is
renamed to the requested output directory only after the manifest is in
place, so a failed run never leaves unmanifested outputs behind.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import shutil
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InputError


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def jsonify(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays for json.dump."""
    if isinstance(obj, dict):
        return {k: jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def format_dat(columns: list[np.ndarray], comments: list[str] | None = None) -> str:
    """Gnuplot-ready whitespace-separated columns with '#' comment header."""
    lines = [f"# {c}" for c in (comments or [])]
    cols = [np.asarray(c) for c in columns]
    for row in zip(*cols):
        lines.append(" ".join(f"{v:.10g}" for v in row))
    return "\n".join(lines) + "\n"


class RunWriter:
    """Staged output directory with a manifest finalizer."""

    def __init__(self, out_dir: str | Path):
        self.final_dir = Path(out_dir)
        if self.final_dir.exists():
            if not self.final_dir.is_dir() or any(self.final_dir.iterdir()):
                raise InputError(f"output path exists and is not an empty directory: {self.final_dir}")
        parent = self.final_dir.parent
        parent.mkdir(parents=True, exist_ok=True)
        self.staging = parent / f".{self.final_dir.name}.tmp{os.getpid()}"
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir()
        self._outputs: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        path = self.staging / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self._outputs.append(name)

    def write_json(self, name: str, obj: Any) -> None:
        self.write_text(name, json.dumps(jsonify(obj), indent=2, sort_keys=True) + "\n")

    def finalize(self, command: str, params: dict[str, Any],
                 inputs: dict[str, str], version: str) -> Path:
        manifest = {
            "command": command,
            "version": version,
            "created_utc": dt.datetime.now(dt.timezone.utc).isoformat(),
            "params": jsonify(params),
            "inputs": inputs,
            "outputs": sorted(self._outputs),
        }
        (self.staging / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if self.final_dir.exists():
            self.final_dir.rmdir()  # known empty from the constructor
        os.replace(self.staging, self.final_dir)
        return self.final_dir

    def abort(self) -> None:
        shutil.rmtree(self.staging, ignore_errors=True)
