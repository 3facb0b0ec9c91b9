"""Grids, cell-centered fields and the scalar truncation family.

Arrays are indexed ``[j, i]`` with ``i`` running along x (axis 1) and ``j``
along y (axis 0).  Cell ``(j, i)`` has center ``((i + 1/2) h, (j + 1/2) h)``.
Values outside the domain (ghost ring and masked-out cells) are zero, which
is how the homogeneous Dirichlet condition enters every operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidGrid, InvalidLevel, InvalidShape, InvalidWidth

#: Slack allowed on the cellwise Euclidean norm of a unit-ball vector field.
UNIT_BALL_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class Grid2D:
    nx: int
    ny: int
    h: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidGrid("nx and ny must be integers")
        if self.nx < 2 or self.ny < 2:
            raise InvalidGrid("nx, ny >= 2 required")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidGrid("h > 0 required")
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != (self.ny, self.nx):
                raise InvalidGrid(f"mask shape {mask.shape} != {(self.ny, self.nx)}")
            if not mask.any():
                raise InvalidGrid("mask selects no cells")
            _, ncomp = ndimage.label(mask)  # default structure is 4-connectivity
            if ncomp != 1:
                raise InvalidGrid("masked region must be 4-connected")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def unit_square(cls, n: int) -> Grid2D:
        return cls(n, n, 1.0 / n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def inside(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.h, self.ny * self.h)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of cell centers."""
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y)

    def __eq__(self, other):
        if not isinstance(other, Grid2D):
            return NotImplemented
        if (self.nx, self.ny, self.h) != (other.nx, other.ny, other.h):
            return False
        if self.mask is None or other.mask is None:
            return self.mask is None and other.mask is None
        return bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.nx, self.ny, self.h, None if self.mask is None else self.mask.tobytes()))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered values; entries outside the domain are forced to zero."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise InvalidShape(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidShape("field values must be finite")
        if self.grid.mask is not None:
            values[~self.grid.mask] = 0.0
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid2D) -> ScalarField:
        return cls(grid, np.zeros(grid.shape))

    def inside_values(self) -> np.ndarray:
        return self.values[self.grid.inside]

    def map(self, fn) -> ScalarField:
        return ScalarField(self.grid, fn(self.values))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _values(other))

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * _values(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _values(x):
    return x.values if isinstance(x, ScalarField) else x


@dataclass(frozen=True, eq=False)
class VectorField:
    """2-vector per dual cell.

    ``staggering="dual"`` is the layout produced by the discrete gradient:
    arrays of shape ``(ny + 1, nx + 1)`` whose entry ``[J, I]`` holds the
    jumps across the right and top faces of padded cell ``(J, I)`` (padded
    indices shift interior cells by one).  ``staggering="cell"`` stores one
    vector per grid cell, shape ``(ny, nx)``.
    """

    grid: Grid2D
    x: np.ndarray
    y: np.ndarray
    staggering: str = "dual"
    unit_ball: bool = False

    def __post_init__(self):
        if self.staggering == "dual":
            shape = (self.grid.ny + 1, self.grid.nx + 1)
        elif self.staggering == "cell":
            shape = self.grid.shape
        else:
            raise InvalidShape(f"unknown staggering {self.staggering!r}")
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.shape != shape or y.shape != shape:
            raise InvalidShape(f"components must have shape {shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidShape("vector components must be finite")
        if self.unit_ball and x.size and np.sqrt(x * x + y * y).max() > 1 + UNIT_BALL_SLACK:
            raise InvalidShape("unit-ball field has a cell with norm > 1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def zeros(cls, grid: Grid2D, staggering: str = "dual", unit_ball: bool = False) -> VectorField:
        shape = (grid.ny + 1, grid.nx + 1) if staggering == "dual" else grid.shape
        return cls(grid, np.zeros(shape), np.zeros(shape), staggering, unit_ball)

    def norms(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def sup_norm(self) -> float:
        return float(self.norms().max())


# -- truncation family -------------------------------------------------------


def _check_level(k):
    if not k > 0:
        raise InvalidLevel(f"truncation level must be > 0, got {k}")


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def trunc(k, s):
    """Clamp ``s`` to ``[-k, k]``."""
    _check_level(k)
    return _out(np.clip(s, -k, k), s)


def gk(k, s):
    """Remainder ``s - trunc(k, s)``."""
    _check_level(k)
    s_arr = np.asarray(s, dtype=float)
    return _out(s_arr - np.clip(s_arr, -k, k), s)


def jk(k, s):
    """Primitive of ``trunc(k, .)`` vanishing at zero."""
    _check_level(k)
    a = np.abs(np.asarray(s, dtype=float))
    return _out(np.where(a <= k, 0.5 * a * a, k * a - 0.5 * k * k), s)


def smooth_trunc(k, eps, s):
    """C^2 regularization of ``trunc(k, .)``; returns ``(value, derivative)``.

    Identity on ``|s| <= k - eps``, constant ``k - eps/2`` on ``|s| >= k``.
    On the blend band the value is the quintic Hermite interpolant that
    matches value, slope and curvature at both ends; with ``x`` the position
    in the band this reduces to ``x - x**3 + x**4 / 2``.
    """
    if not 0 < eps < k:
        raise InvalidWidth(f"need 0 < eps < k, got eps={eps}, k={k}")
    s_arr = np.asarray(s, dtype=float)
    a = np.abs(s_arr)
    lo = k - eps
    x = np.clip((a - lo) / eps, 0.0, 1.0)
    value = np.where(a <= lo, a, np.where(a >= k, lo + 0.5 * eps,
                                          lo + eps * (x - x**3 + 0.5 * x**4)))
    # factored 1 - 3x^2 + 2x^3 stays in [0, 1] under rounding
    deriv = np.where(a <= lo, 1.0, np.where(a >= k, 0.0, (1.0 - x) ** 2 * (1.0 + 2.0 * x)))
    value = np.sign(s_arr) * value
    return _out(value, s), _out(deriv, s)


@dataclass(frozen=True)
class TruncationFamily:
    k: float
    eps: float | None = None

    def __post_init__(self):
        _check_level(self.k)
        if self.eps is not None and not 0 < self.eps < self.k:
            raise InvalidWidth(f"need 0 < eps < k, got eps={self.eps}")

    def trunc(self, s):
        return trunc(self.k, s)

    def gk(self, s):
        return gk(self.k, s)

    def jk(self, s):
        return jk(self.k, s)

    def smooth(self, s):
        if self.eps is None:
            raise InvalidWidth("family has no smoothing width")
        return smooth_trunc(self.k, self.eps, s)


# -- field factory -----------------------------------------------------------


@dataclass(frozen=True)
class Shape:
    """Description of an initial/source profile for :func:`make_field`.

    kinds and their ``params``:

    * ``constant``: ``value``
    * ``disk``: ``center`` (x, y), ``radius``, ``height``
    * ``square``: ``center``, ``side``, ``height``
    * ``step``: ``x0``, ``height`` (height on cells with center x < x0)
    * ``spike``: ``center``, ``alpha``, ``scale`` -- ``scale * |x - c|**-alpha``
    * ``random``: ``seed``, ``amplitude`` (uniform in ``[0, amplitude)``)
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, value=0.0):
        return cls("constant", {"value": value})

    @classmethod
    def disk(cls, center, radius, height=1.0):
        return cls("disk", {"center": tuple(center), "radius": radius, "height": height})

    @classmethod
    def square(cls, center, side, height=1.0):
        return cls("square", {"center": tuple(center), "side": side, "height": height})

    @classmethod
    def step(cls, x0, height=1.0):
        return cls("step", {"x0": x0, "height": height})

    @classmethod
    def spike(cls, center, alpha, scale=1.0):
        return cls("spike", {"center": tuple(center), "alpha": alpha, "scale": scale})

    @classmethod
    def random(cls, seed, amplitude=1.0):
        return cls("random", {"seed": seed, "amplitude": amplitude})


def _check_point(grid, c):
    lx, ly = grid.extent
    if not (0 <= c[0] <= lx and 0 <= c[1] <= ly):
        raise InvalidShape(f"center {c} outside domain [0,{lx}]x[0,{ly}]")


def make_field(grid: Grid2D, shape: Shape) -> ScalarField:
    X, Y = grid.centers()
    p = shape.params
    lx, ly = grid.extent
    if shape.kind == "constant":
        values = np.full(grid.shape, float(p.get("value", 0.0)))
    elif shape.kind == "disk":
        (cx, cy), r = p["center"], p["radius"]
        _check_point(grid, (cx, cy))
        if r <= 0 or cx - r < 0 or cy - r < 0 or cx + r > lx or cy + r > ly:
            raise InvalidShape("disk must have positive radius and lie inside the domain")
        values = np.where((X - cx) ** 2 + (Y - cy) ** 2 < r * r, float(p.get("height", 1.0)), 0.0)
    elif shape.kind == "square":
        (cx, cy), a = p["center"], 0.5 * p["side"]
        _check_point(grid, (cx, cy))
        if a <= 0 or cx - a < 0 or cy - a < 0 or cx + a > lx or cy + a > ly:
            raise InvalidShape("square must have positive side and lie inside the domain")
        inside = (np.abs(X - cx) < a) & (np.abs(Y - cy) < a)
        values = np.where(inside, float(p.get("height", 1.0)), 0.0)
    elif shape.kind == "step":
        x0 = p["x0"]
        if not 0 <= x0 <= lx:
            raise InvalidShape(f"step position {x0} outside [0, {lx}]")
        values = np.where(X < x0, float(p.get("height", 1.0)), 0.0)
    elif shape.kind == "spike":
        c = p["center"]
        _check_point(grid, c)
        if p["alpha"] < 0:
            raise InvalidShape("spike exponent must be >= 0")
        dist = np.hypot(X - c[0], Y - c[1])
        # keep the singular cell finite: never evaluate closer than h/2
        dist = np.maximum(dist, 0.5 * grid.h)
        values = float(p.get("scale", 1.0)) * dist ** (-float(p["alpha"]))
    elif shape.kind == "random":
        rng = np.random.default_rng(p["seed"])
        values = float(p.get("amplitude", 1.0)) * rng.random(grid.shape)
    else:
        raise InvalidShape(f"unknown shape kind {shape.kind!r}")
    return ScalarField(grid, values)


def lp_norm(u: ScalarField, r: float = 1.0) -> float:
    """Discrete ``L^r`` norm with cell-area weights (``r = inf`` allowed)."""
    a = np.abs(u.values)
    if math.isinf(r):
        return float(a.max())
    if r == 1:
        return float(u.grid.cell_area * a.sum())
    return float((u.grid.cell_area * (a**r).sum()) ** (1.0 / r))
