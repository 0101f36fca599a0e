"""Atomic file output and run manifests."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_safe(obj):
    """Plain JSON types only: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(json_safe(obj), indent=2, allow_nan=False) + "\n")


def atomic_write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def environment_versions() -> dict:
    from . import __version__, get_backend

    return {
        "nodereg": __version__,
        "kernel_backend": get_backend(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def write_manifest(out_dir, command: str, config: dict, seeds, outputs, inputs=None) -> Path:
    """Record everything needed to re-run ``command`` next to its outputs.

    ``inputs`` names files the run read besides its config (e.g. a checkpoint).
    """
    path = Path(out_dir) / "manifest.json"
    atomic_write_json(path, {
        "command": command,
        "config": config,
        "seeds": list(seeds),
        "inputs": dict(inputs or {}),
        "outputs": sorted(str(o) for o in outputs),
        "versions": environment_versions(),
    })
    return path
