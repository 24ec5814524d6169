"""Checkpoint I/O: one-line JSON header (names + shapes) followed by the
concatenated little-endian float64 parameter data."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

import numpy as np


def save_checkpoint(params: Mapping[str, np.ndarray], path: str | Path) -> None:
    path = Path(path)
    header = {
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()]
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        for arr in params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        out: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated checkpoint at parameter {entry['name']!r}")
            out[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        return out
