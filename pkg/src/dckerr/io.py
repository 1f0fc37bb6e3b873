"""File formats: binary grids and sinograms with JSON sidecars, CSV traces, manifests.

Binary payloads are little-endian float64 in row-major order. CSV floats
use 17 significant digits; JSON floats use Python's round-trip repr.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def sidecar_path(path):
    path = Path(path)
    return path.with_suffix(".json")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _write_f8(path, array):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype="<f8").tofile(path)
    return path


def write_grid(path, values, origin, spacing, field_name):
    """Binary grid plus sidecar ``{shape, origin, spacing, field_name}``."""
    values = np.asarray(values, dtype=float)
    _write_f8(path, values)
    meta = {"shape": list(values.shape), "origin": list(map(float, origin)),
            "spacing": list(map(float, spacing)), "field_name": field_name}
    write_json(sidecar_path(path), meta)
    return Path(path), sidecar_path(path)


def read_grid(path):
    meta = read_json(sidecar_path(path))
    values = np.fromfile(path, dtype="<f8").reshape(meta["shape"])
    return values, meta


def write_sinogram(path, sino, extra=None):
    """Sinogram binary ``[slice][angle][offset]`` with its geometry sidecar."""
    _write_f8(path, sino.values)
    n_s, n_a, n_o = sino.values.shape
    meta = {
        "n_slices": n_s, "n_angles": n_a, "n_offsets": n_o,
        "offset_min": float(sino.offsets[0]), "offset_max": float(sino.offsets[-1]),
        "z_min": float(sino.z[0]), "z_max": float(sino.z[-1]), "e0": float(sino.e0),
    }
    meta.update(_to_jsonable(sino.meta))
    if extra:
        meta.update(_to_jsonable(extra))
    write_json(sidecar_path(path), meta)
    return Path(path), sidecar_path(path)


def read_sinogram(path):
    from .inversion import Sinogram

    meta = read_json(sidecar_path(path))
    shape = (meta["n_slices"], meta["n_angles"], meta["n_offsets"])
    values = np.fromfile(path, dtype="<f8").reshape(shape)
    angles = np.pi * np.arange(shape[1]) / shape[1]
    offsets = np.linspace(meta["offset_min"], meta["offset_max"], shape[2])
    z = np.linspace(meta["z_min"], meta["z_max"], shape[0])
    return Sinogram(values, angles, offsets, z, meta["e0"], meta)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(FLOAT_FMT % v for v in r) + "\n")
    return path


def read_csv(path):
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
    return header, data


def write_trace(path, trace):
    """CSV ``t,E2,E3`` plus sidecar with h, e0, beam scale, position and beam/medium metadata."""
    write_csv(path, ["t", "E2", "E3"], np.column_stack([trace.t, trace.E2, trace.E3]))
    meta = {"h": trace.h, "e0": trace.e0, "beam_scale": trace.beam_scale, "position": trace.position}
    meta.update(trace.metadata)
    write_json(sidecar_path(path), meta)
    return Path(path), sidecar_path(path)


def read_trace(path):
    from .direct1d import DetectorTrace

    _, data = read_csv(path)
    meta = read_json(sidecar_path(path))
    core = {k: meta.pop(k) for k in ("h", "e0", "beam_scale", "position")}
    return DetectorTrace(core["position"], data[:, 0], data[:, 1], data[:, 2], core["h"], core["e0"],
                         core["beam_scale"], meta)


def sha256(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(output_dir, subcommand, summary, name="manifest.json"):
    """List every file under ``output_dir`` (except the manifest) with size and SHA-256."""
    output_dir = Path(output_dir)
    files = []
    for p in sorted(output_dir.rglob("*")):
        if p.is_file() and p.name != name:
            files.append({"path": p.relative_to(output_dir).as_posix(), "bytes": p.stat().st_size,
                          "sha256": sha256(p)})
    manifest = {"subcommand": subcommand, "files": files, "summary": summary}
    return write_json(output_dir / name, manifest)
