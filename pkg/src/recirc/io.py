"""Result writers: CSV time series, legacy VTK snapshots, the RCF1 binary
sidecar, and the per-directory lock.

RCF1 layout (all little-endian)::

    b"RCF1"  uint64 n_arrays  { uint64 length  float64[length] } * n_arrays
"""
from __future__ import annotations

import csv
import math
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutputError
from .mesh import DofMap, Mesh
from .simulation import CSV_COLUMNS, ScenarioResult

RCF_MAGIC = b"RCF1"
LOCK_NAME = ".recirc.lock"


def _num(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_timeseries_csv(result: ScenarioResult, path) -> Path:
    """One row per recorded step; floats use the shortest round-trip repr."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for rec in result.records:
                w.writerow([_num(x) for x in rec.csv_row()])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_timeseries_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


@dataclass(frozen=True, eq=False)
class FieldState:
    """Fields at one time level: P2 temperature, P2 velocity ``(n, 2)``, P1 pressure."""

    dofmap: DofMap
    theta: np.ndarray
    velocity: np.ndarray
    pressure: np.ndarray


def write_vtk_snapshot(mesh: Mesh, state: FieldState, path) -> Path:
    """Legacy ASCII unstructured grid with the quadratic fields sampled at vertices."""
    path = Path(path)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    theta = np.asarray(state.theta)[:nv]
    vel = np.asarray(state.velocity)[:nv]
    p_cell = np.asarray(state.pressure)[mesh.triangles].mean(axis=1)
    lines = ["# vtk DataFile Version 3.0", "recirc snapshot", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines += [f"POINT_DATA {nv}", "SCALARS theta double 1", "LOOKUP_TABLE default"]
    lines += [_num(t) for t in theta]
    lines.append("VECTORS velocity double")
    lines += [f"{_num(u)} {_num(v)} 0" for u, v in vel]
    lines += [f"CELL_DATA {nt}", "SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [_num(p) for p in p_cell]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def write_rcf(path, arrays) -> Path:
    """Dump float64 arrays (flattened) to an RCF1 sidecar."""
    path = Path(path)
    arrays = [np.ascontiguousarray(a, dtype="<f8").ravel() for a in arrays]
    try:
        with open(path, "wb") as fh:
            fh.write(RCF_MAGIC)
            fh.write(struct.pack("<Q", len(arrays)))
            for a in arrays:
                fh.write(struct.pack("<Q", a.size))
                fh.write(a.tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_rcf(path) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != RCF_MAGIC or len(data) < 12:
        raise OutputError(f"{path}: not an RCF1 file")
    (count,) = struct.unpack_from("<Q", data, 4)
    off, out = 12, []
    for _ in range(count):
        if off + 8 > len(data):
            raise OutputError(f"{path}: truncated header")
        (n,) = struct.unpack_from("<Q", data, off)
        off += 8
        if off + 8 * n > len(data):
            raise OutputError(f"{path}: truncated array")
        out.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).copy())
        off += 8 * n
    if off != len(data):
        raise OutputError(f"{path}: trailing bytes")
    return out


def write_snapshot(directory, step: int, mesh: Mesh, state: FieldState) -> tuple[Path, Path]:
    """VTK file plus the RCF1 sidecar holding theta, velocity (x then y) and pressure."""
    directory = Path(directory)
    vtk = write_vtk_snapshot(mesh, state, directory / f"snapshot_{step:05d}.vtk")
    v = np.asarray(state.velocity)
    rcf = write_rcf(directory / f"snapshot_{step:05d}.rcf", [state.theta, v[:, 0], v[:, 1], state.pressure])
    return vtk, rcf


@contextmanager
def output_lock(directory):
    """Create ``directory`` and hold an exclusive lock file inside it."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fd = os.open(directory / LOCK_NAME, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputError(f"{directory} is in use by another run (remove {LOCK_NAME} if stale)") from None
    except OSError as exc:
        raise OutputError(f"cannot prepare output directory {directory}: {exc}") from exc
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield directory
    finally:
        try:
            os.unlink(directory / LOCK_NAME)
        except FileNotFoundError:
            pass
