"""Checkpoint container: a directory with meta.json plus one raw float32 file per parameter.

Layout:

    <dir>/meta.json       format version, role, config, schedule, step count,
                          and the name -> {file, shape} table
    <dir>/<name>.f32      the parameter as little-endian float32, C order

Round-trips are bit-exact: tensors are stored and reloaded as float32
without any conversion loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InputError, MissingPrerequisiteError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    role: str
    step: int
    config: dict[str, Any]
    schedule: dict[str, Any] | None
    params: dict[str, np.ndarray]
    extra: dict[str, Any]


def _param_filename(name: str) -> str:
    return name.replace("/", "__") + ".f32"


def save_checkpoint(
    directory: str | Path,
    role: str,
    step: int,
    config: dict[str, Any],
    params: dict[str, np.ndarray],
    schedule: dict[str, Any] | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = {}
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        if not np.isfinite(arr).all():
            raise InputError(f"parameter {name!r} contains non-finite values; refusing to checkpoint")
        fname = _param_filename(name)
        arr.tofile(directory / fname)
        table[name] = {"file": fname, "shape": list(arr.shape)}
    meta = {
        "format_version": FORMAT_VERSION,
        "role": role,
        "step": step,
        "config": config,
        "schedule": schedule,
        "params": table,
        "extra": extra or {},
    }
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_checkpoint(directory: str | Path, expected_role: str | None = None) -> Checkpoint:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise MissingPrerequisiteError(f"checkpoint meta not found: {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("format_version") != FORMAT_VERSION:
        raise InputError(f"checkpoint {directory}: unsupported format version {meta.get('format_version')}")
    if expected_role is not None and meta.get("role") != expected_role:
        raise InputError(f"checkpoint {directory}: role {meta.get('role')!r}, expected {expected_role!r}")
    params = {}
    for name, info in meta["params"].items():
        fpath = directory / info["file"]
        if not fpath.is_file():
            raise MissingPrerequisiteError(f"checkpoint parameter file missing: {fpath}")
        shape = tuple(info["shape"])
        arr = np.fromfile(fpath, dtype="<f4")
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise InputError(f"checkpoint {directory}: {name} has {arr.size} values, expected shape {shape}")
        params[name] = arr.reshape(shape)
    return Checkpoint(
        role=meta["role"],
        step=int(meta["step"]),
        config=meta["config"],
        schedule=meta.get("schedule"),
        params=params,
        extra=meta.get("extra", {}),
    )
