"""Checkpoint format: one JSON header line, then a little-endian float64 blob.

The header records parameter names/shapes in order, an echo of the model
config, and the init seed. Parameters are concatenated flat in header
order. ``load`` reverses ``save`` exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import FnoConfig, ParamSet


class CheckpointError(ValueError):
    pass


def save(path: str | Path, config: FnoConfig, params: ParamSet,
         seed: int = 0, extra: dict | None = None) -> None:
    path = Path(path)
    names = list(params)
    header = {
        "format": "gyrebo-checkpoint-v1",
        "dtype": "<f8",
        "config": asdict(config),
        "seed": seed,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "extra": extra or {},
    }
    blob = np.concatenate([np.ascontiguousarray(params[n], dtype="<f8").ravel()
                           for n in names]) if names else np.empty(0, "<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob.tobytes())


def load(path: str | Path) -> tuple[FnoConfig, ParamSet, dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint header in {path}") from exc
    if header.get("format") != "gyrebo-checkpoint-v1":
        raise CheckpointError("unrecognized checkpoint format")
    flat = np.frombuffer(blob, dtype="<f8")
    total = sum(int(np.prod(p["shape"])) for p in header["params"])
    if flat.size != total:
        raise CheckpointError(
            f"blob holds {flat.size} values, header expects {total}")
    params: ParamSet = {}
    offset = 0
    for spec in header["params"]:
        n = int(np.prod(spec["shape"]))
        params[spec["name"]] = flat[offset:offset + n].reshape(spec["shape"]).copy()
        offset += n
    config = FnoConfig(**header["config"])
    return config, params, header
