import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvflow.errors import InvalidGrid, InvalidLevel, InvalidShape, InvalidWidth
from tvflow.grid import (
    Grid2D, ScalarField, Shape, TruncationFamily, VectorField, gk, jk, lp_norm, make_field,
    smooth_trunc, trunc,
)

reals = st.floats(-1e6, 1e6, allow_nan=False)
levels = st.floats(1e-3, 1e3)


# -- grid and containers -----------------------------------------------------


@pytest.mark.parametrize("nx,ny,h", [(1, 4, 0.1), (4, 1, 0.1), (4, 4, 0.0), (4, 4, -1.0),
                                     (4, 4, math.inf)])
def test_grid_rejects_bad_sizes(nx, ny, h):
    with pytest.raises(InvalidGrid):
        Grid2D(nx, ny, h)


def test_grid_mask_must_be_connected_and_nonempty():
    with pytest.raises(InvalidGrid):
        Grid2D(3, 3, 1.0, np.zeros((3, 3), bool))
    diagonal = np.eye(3, dtype=bool)  # only corner-connected
    with pytest.raises(InvalidGrid):
        Grid2D(3, 3, 1.0, diagonal)
    with pytest.raises(InvalidGrid):
        Grid2D(3, 3, 1.0, np.ones((2, 3), bool))
    ell = np.array([[1, 0, 0], [1, 0, 0], [1, 1, 1]], bool)
    assert Grid2D(3, 3, 1.0, ell).n_inside == 5


def test_grid_equality_and_hash():
    a, b = Grid2D.unit_square(8), Grid2D(8, 8, 1 / 8)
    assert a == b and hash(a) == hash(b)
    m = np.ones((8, 8), bool)
    assert a != Grid2D(8, 8, 1 / 8, m)
    assert Grid2D(8, 8, 1 / 8, m) == Grid2D(8, 8, 1 / 8, m.copy())


def test_scalar_field_is_immutable_and_masked():
    mask = np.ones((4, 4), bool)
    mask[0, 0] = False
    g = Grid2D(4, 4, 0.25, mask)
    u = ScalarField(g, np.ones((4, 4)))
    assert u.values[0, 0] == 0 and u.values.sum() == 15
    with pytest.raises(ValueError):
        u.values[1, 1] = 3.0
    with pytest.raises(InvalidShape):
        ScalarField(g, np.ones((3, 4)))
    with pytest.raises(InvalidShape):
        ScalarField(g, np.full((4, 4), np.nan))


def test_scalar_field_arithmetic(grid32, disk32):
    assert np.array_equal((disk32 + disk32).values, 2 * disk32.values)
    assert np.array_equal((disk32 - disk32).values, np.zeros(grid32.shape))
    assert np.array_equal((-disk32).values, -disk32.values)
    assert np.array_equal((3 * disk32).values, (disk32 * 3).values)


def test_vector_field_unit_ball_flag(grid32):
    ny, nx = grid32.ny + 1, grid32.nx + 1
    x = np.zeros((ny, nx))
    x[3, 3] = 1 + 1e-11
    VectorField(grid32, x, np.zeros((ny, nx)), unit_ball=True)
    x[3, 3] = 1 + 1e-9
    with pytest.raises(InvalidShape):
        VectorField(grid32, x, np.zeros((ny, nx)), unit_ball=True)
    with pytest.raises(InvalidShape):
        VectorField(grid32, np.zeros((ny, nx)), np.zeros((ny, nx - 1)))


# -- truncations -------------------------------------------------------------


@pytest.mark.parametrize("k,s,expected", [(2, 3, 2), (2, -0.5, -0.5), (2, -3, -2)])
def test_trunc_examples(k, s, expected):
    assert trunc(k, s) == expected


@pytest.mark.parametrize("k,s,expected", [(2, 3, 1), (2, 1, 0), (2, -3, -1)])
def test_gk_examples(k, s, expected):
    assert gk(k, s) == expected


@pytest.mark.parametrize("k,s,expected", [(2, 1, 0.5), (2, 3, 4), (2, -3, 4)])
def test_jk_examples(k, s, expected):
    assert jk(k, s) == expected


@pytest.mark.parametrize("fn", [trunc, gk, jk])
@pytest.mark.parametrize("k", [0, -1.0])
def test_levels_must_be_positive(fn, k):
    with pytest.raises(InvalidLevel):
        fn(k, 1.0)


@given(levels, reals, reals)
def test_trunc_is_1_lipschitz(k, s, t):
    assert abs(trunc(k, s) - trunc(k, t)) <= abs(s - t) * (1 + 1e-15) + 1e-12


@given(levels, reals)
def test_gk_plus_trunc_is_identity(k, s):
    assert gk(k, s) + trunc(k, s) == s


@given(levels, reals)
def test_jk_bounds(k, s):
    v = jk(k, s)
    assert 0 <= v <= k * abs(s) * (1 + 1e-15)
    assert jk(k, -s) == v


@given(levels, reals)
def test_jk_matches_quadrature_of_trunc(k, s):
    grid = np.linspace(0, s, 2001)
    vals = trunc(k, grid)
    # trapezoid is exact on each linear piece up to the kink cell
    approx = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid)))
    assert abs(jk(k, s) - approx) <= 1e-9 * max(1.0, abs(s) * k) + abs(s) / 2000 * k


def test_jk_over_k_tends_to_abs():
    s = np.array([0.3, -1.7, 4.0])
    errs = [float(np.max(np.abs(jk(k, s) / k - np.abs(s)) / np.abs(s))) for k in (1, 1e-2, 1e-4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_arrays_keep_shape():
    s = np.linspace(-3, 3, 7).reshape(7, 1)
    for fn in (trunc, gk, jk):
        assert fn(1.0, s).shape == (7, 1)
    assert isinstance(trunc(1.0, 0.5), float)


# -- smooth truncation -------------------------------------------------------


def test_smooth_trunc_examples():
    assert smooth_trunc(2, 0.5, 1) == (1.0, 1.0)
    v, d = smooth_trunc(2, 0.5, 5)
    assert v <= 2 and d == 0
    v, d = smooth_trunc(2, 0.5, 1.75)
    assert 0 < d < 1
    fd = (smooth_trunc(2, 0.5, 1.75 + 1e-6)[0] - smooth_trunc(2, 0.5, 1.75 - 1e-6)[0]) / 2e-6
    assert abs(fd - d) < 1e-6


@pytest.mark.parametrize("eps", [0.0, 2.0, 3.0, -0.1])
def test_smooth_trunc_width_range(eps):
    with pytest.raises(InvalidWidth):
        smooth_trunc(2.0, eps, 1.0)


def test_smooth_trunc_derivative_matches_finite_difference(rng):
    k, eps, h = 2.0, 0.5, 1e-6
    s = rng.uniform(-3, 3, 100)
    _, d = smooth_trunc(k, eps, s)
    fd = (smooth_trunc(k, eps, s + h)[0] - smooth_trunc(k, eps, s - h)[0]) / (2 * h)
    assert np.max(np.abs(fd - d)) < 1e-6


@given(st.floats(0.1, 10), st.floats(0.01, 0.99), st.floats(-30, 30))
def test_smooth_trunc_properties(k, frac, s):
    eps = frac * k
    v, d = smooth_trunc(k, eps, s)
    assert 0 <= d <= 1
    assert abs(v) <= k
    v2, d2 = smooth_trunc(k, eps, -s)
    assert v2 == -v and d2 == d
    if abs(s) <= k - eps:
        assert v == s and d == 1
    if abs(s) >= k:
        assert d == 0 and abs(v) == pytest.approx(k - eps / 2)


@pytest.mark.parametrize("edge", [1.5, 2.0])
def test_smooth_trunc_second_derivative_continuous(edge):
    k, eps, h = 2.0, 0.5, 1e-5
    d = lambda s: smooth_trunc(k, eps, s)[1]  # noqa: E731
    left = (d(edge) - d(edge - h)) / h
    right = (d(edge + h) - d(edge)) / h
    assert abs(left) < 1e-3 and abs(right) < 1e-3


def test_truncation_family():
    fam = TruncationFamily(2.0, 0.5)
    assert fam.trunc(3) == 2 and fam.gk(3) == 1 and fam.jk(3) == 4
    assert fam.smooth(1.0) == (1.0, 1.0)
    with pytest.raises(InvalidWidth):
        TruncationFamily(2.0, 2.0)
    with pytest.raises(InvalidWidth):
        TruncationFamily(2.0).smooth(1.0)


# -- field factory -----------------------------------------------------------


def test_constant_zero_field(grid32):
    assert not make_field(grid32, Shape.constant(0)).values.any()


def test_disk_cell_count():
    g = Grid2D.unit_square(64)
    R = 0.25
    u = make_field(g, Shape.disk((0.5, 0.5), R, 1.0))
    count = int((u.values == 1).sum())
    expected = math.ceil(math.pi * R * R / g.h**2)
    assert abs(count - expected) <= 2 * math.pi * R / g.h
    assert set(np.unique(u.values)) == {0.0, 1.0}


def test_random_is_deterministic(grid32):
    a = make_field(grid32, Shape.random(7))
    b = make_field(grid32, Shape.random(7))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, make_field(grid32, Shape.random(8)).values)


@pytest.mark.parametrize("shape", [
    Shape.disk((0.5, 0.5), 0.6),
    Shape.disk((1.5, 0.5), 0.1),
    Shape.disk((0.5, 0.5), 0.0),
    Shape.square((0.1, 0.5), 0.4),
    Shape.step(1.5),
    Shape.spike((2.0, 0.5), 1.0),
    Shape.spike((0.5, 0.5), -1.0),
    Shape("triangle"),
])
def test_geometry_outside_domain_rejected(grid32, shape):
    with pytest.raises(InvalidShape):
        make_field(grid32, shape)


def test_spike_is_finite_and_peaked(grid32):
    u = make_field(grid32, Shape.spike((0.5, 0.5), 1.0, 0.05))
    assert np.isfinite(u.values).all()
    # nearest centers sit h / sqrt(2) from the singular point
    assert u.values.max() == pytest.approx(0.05 * math.sqrt(2) / grid32.h)


def test_step_field(grid32):
    u = make_field(grid32, Shape.step(0.5, 2.0))
    assert np.all(u.values[:, :16] == 2) and not u.values[:, 16:].any()


# -- norms -------------------------------------------------------------------


def test_lp_norm_constant(grid32):
    u = make_field(grid32, Shape.constant(2.0))
    for r in (1, 1.5, 2):
        assert lp_norm(u, r) == pytest.approx(2.0)
    assert lp_norm(u, math.inf) == 2.0


@given(st.floats(1.0, 3.0), st.floats(1.0, 3.0))
def test_lp_norm_monotone_in_r_on_unit_square(r1, r2):
    g = Grid2D.unit_square(8)
    u = make_field(g, Shape.random(3, 5.0))
    lo, hi = sorted((r1, r2))
    assert lp_norm(u, lo) <= lp_norm(u, hi) * (1 + 1e-12)
