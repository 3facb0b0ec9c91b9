import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvflow.entropy import COLUMNS, vector_field_report
from tvflow.errors import DimensionMismatch, ParseError
from tvflow.grid import Grid2D, ScalarField, Shape, make_field
from tvflow.solvers import SolveConfig, evolve
from tvflow.storage import (
    INDEX_COLUMNS, decode_snapshot, encode_snapshot, load_field, load_snapshot,
    load_trajectory, read_array, read_csv_table, save_snapshot, save_trajectory,
    write_entropy_report, write_experiment_report,
)
from tvflow.theorems import ExperimentReport


# -- binary snapshots --------------------------------------------------------


def test_snapshot_layout():
    data = encode_snapshot(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.5, 0.25)
    assert len(data) == 4 + 4 + 4 + 8 + 8 + 4 * 8 == 60
    assert data[:4] == b"TVF1"
    assert struct.unpack("<II", data[4:12]) == (2, 2)
    assert struct.unpack("<dd", data[12:28]) == (0.5, 0.25)
    assert struct.unpack("<4d", data[28:]) == (1.0, 2.0, 3.0, 4.0)


def test_snapshot_row_major_non_square():
    values = np.arange(6.0).reshape(2, 3)
    data = encode_snapshot(values, 1.0)
    assert struct.unpack("<II", data[4:12]) == (3, 2)
    assert struct.unpack("<6d", data[28:]) == tuple(range(6))


@given(st.integers(1, 6).flatmap(lambda ny: st.integers(1, 6).flatmap(
    lambda nx: arrays(np.float64, (ny, nx), elements=st.floats(allow_nan=False)))),
    st.floats(1e-6, 10), st.floats(0, 10))
def test_snapshot_round_trip_bit_exact(values, h, t):
    snap = decode_snapshot(encode_snapshot(values, h, t))
    assert snap.values.tobytes() == values.tobytes()
    assert (snap.h, snap.t) == (h, t)


@pytest.mark.parametrize("data", [b"", b"XXXX" + bytes(24), encode_snapshot(np.ones((2, 2)), 1.0)[:-1]])
def test_corrupt_snapshot(data):
    with pytest.raises(ParseError):
        decode_snapshot(data)


def test_save_and_load_field_file(tmp_path, disk32):
    p = tmp_path / "u.tvf"
    save_snapshot(disk32, p, t=0.5)
    snap = load_snapshot(p)
    assert np.array_equal(snap.values, disk32.values) and snap.t == 0.5
    assert np.array_equal(load_field(p, disk32.grid).values, disk32.values)
    with pytest.raises(DimensionMismatch):
        load_field(p, Grid2D(32, 32, 0.5))


# -- text and image fields ---------------------------------------------------


def test_csv_field(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("0,1\n2,3\n")
    values, h = read_array(p)
    assert values.tolist() == [[0, 1], [2, 3]] and h is None
    assert load_field(p, Grid2D(2, 2, 0.5)).values.tolist() == [[0, 1], [2, 3]]


def test_csv_dimension_mismatch(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("0,1\n2,3\n4,5\n")
    with pytest.raises(DimensionMismatch):
        load_field(p, Grid2D(2, 2, 0.5))


@pytest.mark.parametrize("text", ["0,1\n2\n", "0,x\n", ""])
def test_bad_csv(tmp_path, text):
    p = tmp_path / "f.csv"
    p.write_text(text)
    with pytest.raises(ParseError):
        read_array(p)


def test_csv_decimal_point_is_locale_free(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("0.5,1.25\n-2e-3,3\n")
    assert read_array(p)[0].tolist() == [[0.5, 1.25], [-0.002, 3.0]]


def test_pgm_ascii_and_binary(tmp_path):
    a = tmp_path / "a.pgm"
    a.write_bytes(b"P2\n# comment\n3 2\n255\n0 51 255\n102 0 255\n")
    b = tmp_path / "b.pgm"
    b.write_bytes(b"P5 3 2 255\n" + bytes([0, 51, 255, 102, 0, 255]))
    expected = [[0.0, 0.2, 1.0], [0.4, 0.0, 1.0]]
    for p in (a, b):
        values, _ = read_array(p)
        assert np.allclose(values, expected)
    with pytest.raises(ParseError):
        bad = tmp_path / "c.pgm"
        bad.write_bytes(b"P5 3 2 65535\n" + bytes(12))
        read_array(bad)


# -- trajectories and reports ------------------------------------------------


@pytest.fixture(scope="module")
def traj():
    g = Grid2D.unit_square(16)
    return evolve(SolveConfig(g, 0.04, 0.01, make_field(g, Shape.disk((0.5, 0.5), 0.25))))


def test_trajectory_round_trip(tmp_path, traj):
    index = save_trajectory(traj, tmp_path / "run")
    rows = read_csv_table(index)
    assert len(rows) == len(traj) == 5
    assert tuple(rows[0]) == INDEX_COLUMNS
    assert rows[0]["gap"] == "" and all(isinstance(r["gap"], float) for r in rows[1:])
    back = load_trajectory(tmp_path / "run")
    assert back.grid == traj.grid and np.array_equal(back.times, traj.times)
    for a, b in zip(back.states, traj.states):
        assert np.array_equal(a.values, b.values)
    for a, b in zip(back.duals, traj.duals):
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
        assert a.x.shape == (17, 17)


def test_loaded_trajectory_feeds_diagnostics(tmp_path, traj):
    save_trajectory(traj, tmp_path / "run")
    back = load_trajectory(tmp_path / "run")
    a = vector_field_report(traj, None, 1.0).rows
    b = vector_field_report(back, None, 1.0).rows
    assert a == b


def test_missing_index(tmp_path):
    with pytest.raises(OSError):
        load_trajectory(tmp_path)


def test_report_csvs(tmp_path, traj):
    rep = vector_field_report(traj, None, 1.0)
    p = tmp_path / "entropy.csv"
    write_entropy_report(rep, p)
    rows = read_csv_table(p)
    assert tuple(rows[0]) == COLUMNS and len(rows) == len(traj) - 1
    assert rows[0]["pairing_gap"] == rep.rows[0]["pairing_gap"]
    assert np.isnan(rows[0]["entropy_residual"])
    exp = ExperimentReport("x", "d", True, 1.0, [{"t": 0.0, "a": 1.5}, {"t": 0.1, "b": 2.0}])
    q = tmp_path / "x.csv"
    write_experiment_report(exp, q)
    assert q.read_text() == "t,a,b\n0.0,1.5,\n0.1,,2.0\n"


def test_scalar_values_from_plain_array(tmp_path):
    p = tmp_path / "v.tvf"
    save_snapshot(np.ones((3, 4)), p)
    snap = load_snapshot(p)
    assert (snap.nx, snap.ny, snap.h) == (4, 3, 0.25)
    assert isinstance(ScalarField(Grid2D(4, 3, 0.25), snap.values), ScalarField)
