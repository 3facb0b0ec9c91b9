"""Discrete gradient/divergence pair, total variation, pairing and traces.

The gradient uses forward differences on the zero-padded field, so every
face between an inside cell and the exterior carries the jump ``-u/h`` (or
``+u/h`` on the left/bottom side).  Total variation therefore contains the
boundary term of the BV norm without a separate code path, and the full
pairing ``h^2 sum z . grad v`` equals the interior pairing minus the
boundary flux term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStaggering
from .grid import Grid2D, ScalarField, VectorField


@dataclass(frozen=True)
class TVOptions:
    norm: str = "isotropic"
    include_boundary: bool = True

    def __post_init__(self):
        if self.norm not in ("isotropic", "anisotropic"):
            raise ValueError(f"norm must be 'isotropic' or 'anisotropic', got {self.norm!r}")


ISOTROPIC = TVOptions()


# -- array kernels -----------------------------------------------------------


def grad_arrays(v: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    V = np.pad(v, 1)
    gx = (V[:-1, 1:] - V[:-1, :-1]) / h
    gy = (V[1:, :-1] - V[:-1, :-1]) / h
    return gx, gy


def div_arrays(px: np.ndarray, py: np.ndarray, h: float) -> np.ndarray:
    """Negative transpose of :func:`grad_arrays`."""
    return (px[1:, 1:] - px[1:, :-1] + py[1:, 1:] - py[:-1, 1:]) / h


def padded_inside(grid: Grid2D) -> np.ndarray:
    return np.pad(grid.inside, 1)


def boundary_face_masks(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Dual-layout masks of x- and y-faces separating inside from outside."""
    P = padded_inside(grid)
    bx = P[:-1, 1:] != P[:-1, :-1]
    by = P[1:, :-1] != P[:-1, :-1]
    return bx, by


# -- field operators ---------------------------------------------------------


def gradient(u: ScalarField) -> VectorField:
    gx, gy = grad_arrays(u.values, u.grid.h)
    return VectorField(u.grid, gx, gy)


def _require_dual(p: VectorField):
    if p.staggering != "dual":
        raise InvalidStaggering(f"expected dual staggering, got {p.staggering!r}")


def divergence(p: VectorField) -> ScalarField:
    _require_dual(p)
    return ScalarField(p.grid, div_arrays(p.x, p.y, p.grid.h))


def _jumps(u: ScalarField, opts: TVOptions):
    gx, gy = grad_arrays(u.values, u.grid.h)
    if not opts.include_boundary:
        bx, by = boundary_face_masks(u.grid)
        gx = np.where(bx, 0.0, gx)
        gy = np.where(by, 0.0, gy)
    return gx, gy


def tv(u: ScalarField, opts: TVOptions = ISOTROPIC) -> float:
    gx, gy = _jumps(u, opts)
    if opts.norm == "isotropic":
        dens = np.sqrt(gx * gx + gy * gy)
    else:
        dens = np.abs(gx) + np.abs(gy)
    return float(u.grid.cell_area * dens.sum())


def pairing(z: VectorField, v: ScalarField, include_boundary: bool = True) -> float:
    """``h^2 sum z . grad v``.

    With ``include_boundary=False`` the ghost-cell jumps are dropped, which
    leaves the pairing over the open domain; the difference is exactly
    ``-sum_faces h v [z, nu]``.
    """
    _require_dual(z)
    gx, gy = _jumps(v, TVOptions(include_boundary=include_boundary))
    return float(v.grid.cell_area * (z.x * gx + z.y * gy).sum())


@dataclass(frozen=True)
class BoundaryTrace:
    """Normal component of a dual field on each boundary face.

    ``axis`` is 0 for faces crossed by x (normal +-e_x) and 1 for y-faces;
    ``normal_sign`` is +1 when the outward normal points along the positive
    axis.  ``cell`` holds the ``(j, i)`` index of the adjacent inside cell.
    """

    values: np.ndarray
    axis: np.ndarray
    normal_sign: np.ndarray
    cell: np.ndarray
    h: float

    def __len__(self):
        return len(self.values)


def _boundary_faces(grid: Grid2D):
    P = padded_inside(grid)
    bx, by = boundary_face_masks(grid)
    Jx, Ix = np.nonzero(bx)
    Jy, Iy = np.nonzero(by)
    # x-face at dual (J, I) separates padded (J, I) and (J, I+1)
    sx = np.where(P[Jx, Ix], 1, -1)
    cx = np.stack([np.where(sx > 0, Jx, Jx), np.where(sx > 0, Ix, Ix + 1)], axis=1) - 1
    sy = np.where(P[Jy, Iy], 1, -1)
    cy = np.stack([np.where(sy > 0, Jy, Jy + 1), Iy], axis=1) - 1
    return (Jx, Ix, sx, cx), (Jy, Iy, sy, cy)


def boundary_trace(z: VectorField) -> BoundaryTrace:
    _require_dual(z)
    (Jx, Ix, sx, cx), (Jy, Iy, sy, cy) = _boundary_faces(z.grid)
    values = np.concatenate([sx * z.x[Jx, Ix], sy * z.y[Jy, Iy]])
    return BoundaryTrace(
        values=values,
        axis=np.concatenate([np.zeros(len(Jx), int), np.ones(len(Jy), int)]),
        normal_sign=np.concatenate([sx, sy]),
        cell=np.concatenate([cx, cy]).reshape(-1, 2),
        h=z.grid.h,
    )


def boundary_values(u: ScalarField, trace: BoundaryTrace) -> np.ndarray:
    """Values of ``u`` at the inside cells adjacent to each traced face."""
    return u.values[trace.cell[:, 0], trace.cell[:, 1]]


def boundary_integral(u: ScalarField) -> float:
    """``sum_faces h |u|`` over boundary faces (inside-cell value)."""
    (Jx, Ix, sx, cx), (Jy, Iy, sy, cy) = _boundary_faces(u.grid)
    cells = np.concatenate([cx, cy]).reshape(-1, 2)
    return float(u.grid.h * np.abs(u.values[cells[:, 0], cells[:, 1]]).sum())


def boundary_flux(z: VectorField, v: ScalarField) -> float:
    """``sum_faces h v [z, nu]``."""
    trace = boundary_trace(z)
    return float(trace.h * (boundary_values(v, trace) * trace.values).sum())


def green_residual(z: VectorField, v: ScalarField) -> float:
    """``h^2 <div z, v> + (z, Dv)_interior - sum_faces h v [z, nu]``; zero up to rounding."""
    lhs = v.grid.cell_area * float((divergence(z).values * v.values).sum())
    return lhs + pairing(z, v, include_boundary=False) - boundary_flux(z, v)


def normalized_gradient(v: ScalarField) -> VectorField:
    """Cellwise ``grad v / |grad v|``; cells with zero gradient get 0."""
    gx, gy = grad_arrays(v.values, v.grid.h)
    n = np.hypot(gx, gy)
    safe = np.where(n > 0, n, 1.0)
    return VectorField(v.grid, np.where(n > 0, gx / safe, 0.0), np.where(n > 0, gy / safe, 0.0),
                       unit_ball=True)
