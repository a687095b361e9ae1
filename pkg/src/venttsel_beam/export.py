"""Result files: CSV tables, JSON reports, Matrix Market dumps, binary snapshots.

Every file starts with a header block holding the format version and the
fully resolved run configuration.  CSV files carry it as ``#`` comment lines
ahead of the column row; JSON files as top-level ``format_version`` and
``config`` keys.

Binary snapshot layout (little-endian)::

    int64 n, int64 nt, float64 dt
    (nt + 1) rows of 6n float64: [q (3n), v (3n)]   # row-major
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np
import scipy.io

FORMAT_VERSION = 1
_SNAP_HEADER = struct.Struct("<qqd")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _header_lines(config: Optional[Mapping]) -> list[str]:
    lines = [f"# format_version: {FORMAT_VERSION}"]
    for key, val in (config or {}).items():
        lines.append(f"# {key}: {_fmt(val)}")
    return lines


def write_csv(path, columns: Iterable[str], rows, config: Optional[Mapping] = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in _header_lines(config):
            fh.write(line + "\r\n")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """Return ``(header, columns, rows)`` of a file written by :func:`write_csv`."""
    header = {}
    with Path(path).open(newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            header[key] = val
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [row for row in reader]
    return header, columns, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: Mapping, config: Optional[Mapping] = None) -> Path:
    path = Path(path)
    doc = {"format_version": FORMAT_VERSION, "config": dict(config or {})}
    doc.update(payload)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


TRAJECTORY_COLUMNS = ("t", "E", "w(L)", "xi(L)", "s(L)", "w_t(L)", "xi_t(L)", "s_t(L)")


def trajectory_rows(traj):
    pos = traj.position_traces().values
    vel = traj.velocity_traces().values
    E = traj.energy
    for j, t in enumerate(traj.times):
        yield (t, E[j], *pos[j], *vel[j])


def write_trajectory_csv(path, traj, config: Optional[Mapping] = None) -> Path:
    return write_csv(path, TRAJECTORY_COLUMNS, trajectory_rows(traj), config)


def write_controls_csv(path, controls, config: Optional[Mapping] = None) -> Path:
    rows = ((t, *u) for t, u in zip(controls.times, controls.values))
    return write_csv(path, ("t", "u1", "u2", "u3"), rows, config)


def write_snapshots(path, traj) -> Path:
    path = Path(path)
    n = traj.sys.n
    dt = float(traj.times[1] - traj.times[0]) if traj.times.size > 1 else 0.0
    data = np.hstack([traj.q, traj.v]).astype("<f8")
    with path.open("wb") as fh:
        fh.write(_SNAP_HEADER.pack(n, traj.nt, dt))
        fh.write(np.ascontiguousarray(data).tobytes())
    return path


def read_snapshots(path):
    """Return ``(n, nt, dt, states)`` with ``states`` of shape ``(nt+1, 6n)``."""
    raw = Path(path).read_bytes()
    n, nt, dt = _SNAP_HEADER.unpack_from(raw, 0)
    data = np.frombuffer(raw, dtype="<f8", offset=_SNAP_HEADER.size)
    return n, nt, dt, data.reshape(nt + 1, 6 * n)


def write_matrix_market(directory, sys) -> list[Path]:
    """Dump ``M``, ``K``, ``B`` and ``C`` in Matrix Market coordinate format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, mat in (("M", sys.M), ("K", sys.K), ("B", sys.B), ("C", sys.C)):
        path = directory / f"{name}.mtx"
        scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(mat), precision=17)
        out.append(path)
    return out
