"""Field files, binary snapshots, trajectory directories and report CSVs.

Binary snapshot layout (little-endian): magic ``TVF1``, u32 nx, u32 ny,
f64 h, f64 t, then ``nx*ny`` f64 values in row-major order (row ``j`` is
``y`` index ``j``).  CSV fields use the same row order: line ``j`` holds
``values[j, :]``.  PGM images are mapped linearly to ``[0, 1]`` with the
same row convention (no vertical flip).
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .entropy import COLUMNS, EntropyReport
from .errors import DimensionMismatch, ParseError
from .grid import Grid2D, ScalarField, VectorField
from .solvers import Ladder, Source, Trajectory
from .theorems import ExperimentReport

MAGIC = b"TVF1"
_HEADER = struct.Struct("<4sIIdd")
INDEX_NAME = "index.csv"
INDEX_COLUMNS = ("time", "filename", "gap", "zx_file", "zy_file")


@dataclass(frozen=True)
class Snapshot:
    values: np.ndarray
    h: float
    t: float

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]


# -- binary snapshots --------------------------------------------------------


def encode_snapshot(values: np.ndarray, h: float, t: float = 0.0) -> bytes:
    values = np.asarray(values, dtype="<f8")
    ny, nx = values.shape
    return _HEADER.pack(MAGIC, nx, ny, float(h), float(t)) + values.tobytes(order="C")


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size:
        raise ParseError("snapshot shorter than its header")
    magic, nx, ny, h, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * nx * ny:
        raise ParseError(f"expected {8 * nx * ny} payload bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(ny, nx).astype(float)
    return Snapshot(values, h, t)


def save_snapshot(obj, path, t: float = 0.0) -> None:
    """Write a field (one file) or a trajectory (a directory, see :func:`save_trajectory`)."""
    if isinstance(obj, Trajectory):
        save_trajectory(obj, path)
        return
    values = obj.values if isinstance(obj, ScalarField) else np.asarray(obj)
    h = obj.grid.h if isinstance(obj, ScalarField) else 1.0 / values.shape[1]
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(values, h, t))


def load_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


# -- field ingestion ---------------------------------------------------------


def _read_csv(text: str) -> np.ndarray:
    rows = [line for line in text.splitlines() if line.strip()]
    try:
        data = [[float(x) for x in line.split(",")] for line in rows]
    except ValueError as exc:
        raise ParseError(f"bad number in CSV: {exc}") from None
    if not data or len({len(r) for r in data}) != 1:
        raise ParseError("CSV rows must be nonempty and of equal length")
    return np.array(data, dtype=float)


def _pgm_tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset just past the last one."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ParseError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def _read_pgm(data: bytes) -> np.ndarray:
    tokens, off = _pgm_tokens(data, 4)
    magic = tokens[0]
    try:
        nx, ny, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("bad PGM header") from None
    if not 0 < maxval < 256:
        raise ParseError("only 8-bit PGM is supported")
    if magic == b"P5":
        body = data[off + 1:off + 1 + nx * ny]
        if len(body) != nx * ny:
            raise ParseError("truncated PGM raster")
        raw = np.frombuffer(body, dtype=np.uint8)
    elif magic == b"P2":
        try:
            raw = np.array([int(x) for x in data[off:].split()])
        except ValueError:
            raise ParseError("bad PGM raster") from None
        if raw.size != nx * ny:
            raise ParseError("PGM raster size does not match header")
    else:
        raise ParseError(f"unknown PGM magic {magic!r}")
    return raw.reshape(ny, nx).astype(float) / maxval


def read_array(path) -> tuple[np.ndarray, float | None]:
    """Values from CSV, PGM or binary snapshot, plus the stored ``h`` if any."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(MAGIC):
        snap = decode_snapshot(data)
        return snap.values, snap.h
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data), None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError("not UTF-8 CSV, PGM or a TVF1 snapshot") from None
    return _read_csv(text), None


def load_field(path, grid: Grid2D) -> ScalarField:
    values, h = read_array(path)
    if values.shape != grid.shape:
        raise DimensionMismatch(
            f"file holds {values.shape[0]}x{values.shape[1]} (rows x cols), grid is "
            f"{grid.ny}x{grid.nx}")
    if h is not None and not math.isclose(h, grid.h, rel_tol=1e-12):
        raise DimensionMismatch(f"file spacing h={h} differs from grid h={grid.h}")
    if not np.all(np.isfinite(values)):
        raise ParseError("field contains non-finite values")
    return ScalarField(grid, values)


# -- trajectories ------------------------------------------------------------


def _gap_at(traj: Trajectory, t: float):
    for rec in traj.step_log:
        if abs(rec.t - t) <= 1e-12 * max(1.0, abs(t)):
            return rec.gap
    return None


def save_trajectory(traj: Trajectory, directory) -> str:
    """One snapshot file per time plus ``index.csv``; returns the index path.

    Vector fields, when present, go to two extra snapshot files per time
    with the dual-grid shape ``(ny + 1, nx + 1)``.
    """
    os.makedirs(directory, exist_ok=True)
    h = traj.grid.h
    rows = []
    for m, (t, s) in enumerate(zip(traj.times, traj.states)):
        name = f"u_{m:05d}.tvf"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(encode_snapshot(s.values, h, t))
        zx_name = zy_name = ""
        if traj.duals is not None:
            z = traj.duals[m]
            zx_name, zy_name = f"zx_{m:05d}.tvf", f"zy_{m:05d}.tvf"
            for nm, arr in ((zx_name, z.x), (zy_name, z.y)):
                with open(os.path.join(directory, nm), "wb") as fh:
                    fh.write(encode_snapshot(arr, h, t))
        gap = _gap_at(traj, t) if m > 0 else None
        rows.append((repr(float(t)), name, "" if gap is None else repr(float(gap)),
                     zx_name, zy_name))
    index = os.path.join(directory, INDEX_NAME)
    with open(index, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_COLUMNS)
        w.writerows(rows)
    return index


def load_trajectory(directory, grid: Grid2D | None = None, f=None) -> Trajectory:
    """Inverse of :func:`save_trajectory`.  ``f`` becomes the ladder source (default zero)."""
    with open(os.path.join(directory, INDEX_NAME), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ParseError("empty trajectory index")
    times, states, duals = [], [], []
    for row in rows:
        snap = load_snapshot(os.path.join(directory, row["filename"]))
        if grid is None:
            grid = Grid2D(snap.nx, snap.ny, snap.h)
        if (snap.ny, snap.nx) != grid.shape:
            raise DimensionMismatch("snapshot size differs from grid")
        times.append(float(row["time"]))
        states.append(ScalarField(grid, snap.values))
        if row.get("zx_file"):
            zx = load_snapshot(os.path.join(directory, row["zx_file"])).values
            zy = load_snapshot(os.path.join(directory, row["zy_file"])).values
            duals.append(VectorField(grid, zx, zy, unit_ball=True))
    if duals and len(duals) != len(states):
        raise ParseError("vector fields missing for some snapshots")
    source = Source.zero(grid) if f is None else f
    tau = float(np.min(np.diff(times))) if len(times) > 1 else 0.0
    return Trajectory(grid, np.array(times), states, duals or None,
                      Ladder(source, states[0], None), tau)


# -- reports -----------------------------------------------------------------


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_entropy_report(report: EntropyReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in report.rows:
            w.writerow([_cell(row.get(c, math.nan)) for c in COLUMNS])


def write_experiment_report(report: ExperimentReport, path) -> None:
    cols = []
    for row in report.table:
        cols.extend(c for c in row if c not in cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in report.table:
            w.writerow([_cell(row.get(c, "")) for c in cols])


def read_csv_table(path) -> list:
    """Rows of a report CSV as dicts of floats (non-numeric cells stay strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
        return out
