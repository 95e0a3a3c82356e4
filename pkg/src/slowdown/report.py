"""CSV tables and JSON run manifests.

CSV floats use ``repr`` (shortest round-trip form), so identical results give
byte-identical files.  Timing and host details go only into the manifest.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import subprocess
import time

from . import __version__


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v).lower()
    if hasattr(v, "item"):  # numpy scalar
        return _cell(v.item())
    return str(v)


def write_csv(path: str, rows: list[dict], columns: list[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])
    return path


def read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def version_tag() -> str:
    """``v<version>`` plus the git description of the source tree when available."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                              capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"v{__version__}-{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "tolist") and getattr(v, "ndim", 0) > 0:
        return _jsonable(v.tolist())
    if hasattr(v, "item"):
        return _jsonable(v.item())
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


class Manifest:
    """Collects artifacts and results of one run; ``write`` adds timing."""

    def __init__(self, command: str, config):
        self.command = command
        self.config = config
        self.started = time.time()
        self.artifacts: list[str] = []
        self.results: dict = {}
        self.durations: dict = {}

    def timed(self, label):
        manifest = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                manifest.durations[label] = time.perf_counter() - self.t0
                return False

        return _Timer()

    def add(self, path: str) -> str:
        self.artifacts.append(os.path.basename(path))
        return path

    def write(self, path: str) -> str:
        body = {
            "command": self.command,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "version": version_tag(),
            "python": platform.python_version(),
            "durations_s": self.durations,
            "wall_s": time.time() - self.started,
            "artifacts": self.artifacts,
            "results": self.results,
        }
        with open(path, "w") as fh:
            fh.write(dumps(body) + "\n")
        return path


__all__ = ["Manifest", "dumps", "read_csv", "version_tag", "write_csv"]
