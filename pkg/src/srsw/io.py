"""
On-disk formats.

Snapshot: ``<stem>.bin`` holds the raw little-endian float64 values of every
component, row-major, concatenated in sidecar order, with no header.
``<stem>.json`` records ``n``, ``length``, ``components``, ``time``, ``seed``
and any extra metadata.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .grid import TorusGrid

_LE_F64 = np.dtype("<f8")


def canonical_json(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return obj


def write_json(path: Path | str, obj: Any) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def fmt(x: Any) -> str:
    """Round-trip float formatting used for every CSV cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: Path | str) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = [[float(c) if c else math.nan for c in line.split(",")] for line in text[1:]]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def save_snapshot(stem: Path | str, grid: TorusGrid, components: Mapping[str, np.ndarray],
                  time: float = 0.0, seed: int | None = None, extra: Mapping | None = None) -> tuple[Path, Path]:
    """Write ``components`` (name -> (n, n) array) as ``stem.bin`` + ``stem.json``."""
    stem = Path(stem)
    names = list(components)
    arrays = []
    for name in names:
        arr = np.asarray(components[name], dtype=float)
        if arr.shape != grid.shape:
            raise ValueError(f"component {name!r} has shape {arr.shape}, grid is {grid.shape}")
        arrays.append(np.ascontiguousarray(arr, dtype=_LE_F64))
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    with open(bin_path, "wb") as fh:
        for arr in arrays:
            fh.write(arr.tobytes(order="C"))
    meta = {"n": grid.n, "length": grid.length, "components": names, "time": float(time), "seed": seed}
    if extra:
        meta.update(extra)
    write_json(json_path, meta)
    return bin_path, json_path


def load_snapshot(stem: Path | str) -> tuple[TorusGrid, dict[str, np.ndarray], dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    grid = TorusGrid(int(meta["n"]), float(meta["length"]))
    raw = np.fromfile(stem.with_suffix(".bin"), dtype=_LE_F64)
    names = list(meta["components"])
    expected = len(names) * grid.n * grid.n
    if raw.size != expected:
        raise ValueError(f"snapshot holds {raw.size} values, sidecar implies {expected}")
    raw = raw.reshape(len(names), grid.n, grid.n).astype(float)
    return grid, {name: raw[i] for i, name in enumerate(names)}, meta


def save_array(stem: Path | str, array: np.ndarray, meta: Mapping) -> None:
    """Flat little-endian float64 dump of an arbitrary array plus a JSON sidecar."""
    stem = Path(stem)
    arr = np.ascontiguousarray(array, dtype=_LE_F64)
    stem.with_suffix(".bin").write_bytes(arr.tobytes(order="C"))
    write_json(stem.with_suffix(".json"), {**meta, "shape": list(arr.shape)})


def load_array(stem: Path | str) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    arr = np.fromfile(stem.with_suffix(".bin"), dtype=_LE_F64).reshape(meta["shape"]).astype(float)
    return arr, meta
