"""Time integration of ``u' = div(Du/|Du|) + f`` with zero Dirichlet data.

Two independent routes:

* implicit Euler, each step being the ROF proximal map of total variation,
  solved on the dual (:func:`rof_step`, :func:`evolve`);
* semi-implicit p-Laplacian steps with lagged diffusivity, continued in
  ``p -> 1`` (:func:`plap_step`, :func:`p_continuation`).
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from . import _kernels
from .calculus import div_arrays, grad_arrays
from .errors import InnerNoConvergence, InvalidInputs, InvalidRange, LinearSolveStagnation
from .grid import Grid2D, ScalarField, VectorField, lp_norm, trunc

log = logging.getLogger(__name__)


# -- sources -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Source:
    """Piecewise-constant-in-time source: ``fields[i]`` on ``[knots[i], knots[i+1])``.

    The last piece extends to infinity.
    """

    grid: Grid2D
    knots: tuple
    fields: tuple

    def __post_init__(self):
        knots = tuple(float(t) for t in self.knots)
        if not knots or knots[0] != 0.0 or any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidInputs("source knots must start at 0 and increase strictly")
        if len(self.fields) != len(knots):
            raise InvalidInputs("one field per knot required")
        for f in self.fields:
            if f.grid != self.grid:
                raise InvalidInputs("source field on a different grid")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "fields", tuple(self.fields))

    @classmethod
    def zero(cls, grid):
        return cls(grid, (0.0,), (ScalarField.zeros(grid),))

    @classmethod
    def constant(cls, f: ScalarField):
        return cls(f.grid, (0.0,), (f,))

    @classmethod
    def piecewise(cls, knots, fields):
        return cls(fields[0].grid, tuple(knots), tuple(fields))

    def is_zero(self) -> bool:
        return all(not np.any(f.values) for f in self.fields)

    def map(self, fn) -> Source:
        return Source(self.grid, self.knots, tuple(f.map(fn) for f in self.fields))

    def _pieces(self, t0, t1):
        """Yield ``(length, field)`` of the pieces overlapping ``[t0, t1]``."""
        edges = self.knots[1:] + (math.inf,)
        for start, end, f in zip(self.knots, edges, self.fields):
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                yield hi - lo, f

    def average(self, t0: float, t1: float) -> ScalarField:
        if t1 <= t0:
            raise InvalidRange("empty averaging window")
        acc = np.zeros(self.grid.shape)
        for length, f in self._pieces(t0, t1):
            acc += length * f.values
        return ScalarField(self.grid, acc / (t1 - t0))

    def time_norm(self, T: float, r: float = 1.0, other: Source | None = None) -> float:
        """``int_0^T ||f(t) - other(t)||_r dt`` (exact for piecewise-constant data)."""
        knots = self.knots + (other.knots if other is not None else ())
        cuts = sorted({t for t in knots if t < T} | {T})
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            diff = self.average(a, b)
            if other is not None:
                diff = diff - other.average(a, b)
            total += (b - a) * lp_norm(diff, r)
        return total

    def sup_norm(self) -> float:
        return max(float(np.abs(f.values).max()) for f in self.fields)


def as_source(f, grid) -> Source:
    if f is None:
        return Source.zero(grid)
    if isinstance(f, Source):
        return f
    if isinstance(f, ScalarField):
        return Source.constant(f)
    raise InvalidInputs(f"cannot interpret {type(f).__name__} as a source")


# -- configuration and results -----------------------------------------------


@dataclass(frozen=True)
class InnerOptions:
    max_iters: int = 20000
    gap_tol: float = 1e-6
    # None selects h^2 / (8 tau)
    dual_step: float | None = None
    check_every: int = 10
    accelerated: bool = True
    # "anisotropic" swaps the per-face Euclidean ball for the box |zx|, |zy| <= 1
    norm: str = "isotropic"

    def __post_init__(self):
        if self.norm not in ("isotropic", "anisotropic"):
            raise InvalidRange("norm must be 'isotropic' or 'anisotropic'")
        if not self.gap_tol > 0:
            raise InvalidRange("gap_tol > 0")
        if self.max_iters < 1:
            raise InvalidRange("max_iters >= 1")
        if self.dual_step is not None and not self.dual_step > 0:
            raise InvalidRange("dual_step > 0")

    def step_for(self, h, tau):
        return self.dual_step if self.dual_step is not None else h * h / (8.0 * tau)


@dataclass(frozen=True, eq=False)
class SolveConfig:
    grid: Grid2D
    T: float
    tau: float
    u0: ScalarField
    f: Source | ScalarField | None = None
    # None: use the data as given; int n: ladder level n; "auto": smallest
    # power of two meeting the L1 budget
    ladder_level: int | str | None = None
    inner: InnerOptions = field(default_factory=InnerOptions)
    # None: every time step
    snapshots: tuple | None = None

    def __post_init__(self):
        if not (self.T > 0 and self.tau > 0):
            raise InvalidRange("T > 0 and tau > 0")
        if not self.tau < self.T:
            raise InvalidRange("tau < T")
        if self.u0.grid != self.grid:
            raise InvalidInputs("u0 lives on a different grid")
        object.__setattr__(self, "f", as_source(self.f, self.grid))
        lvl = self.ladder_level
        if lvl is not None and lvl != "auto" and not (isinstance(lvl, int) and lvl >= 1):
            raise InvalidRange("ladder level must be an integer >= 1, 'auto' or None")
        if self.snapshots is not None:
            snaps = tuple(sorted(float(t) for t in self.snapshots))
            if any(t < 0 or t > self.T * (1 + 1e-12) for t in snaps):
                raise InvalidRange("snapshot times must lie in [0, T]")
            object.__setattr__(self, "snapshots", snaps)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.tau - 1e-9))

    @property
    def dt(self) -> float:
        """Uniform step actually used (``T / n_steps``)."""
        return self.T / self.n_steps

    def with_(self, **changes) -> SolveConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class RofResult:
    u_next: ScalarField
    z: VectorField
    gap: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PlapResult:
    u_next: ScalarField
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    iterations: int
    gap: float
    converged: bool


@dataclass(frozen=True, eq=False)
class Ladder:
    f: Source
    u0: ScalarField
    level: int | None


@dataclass(eq=False)
class Trajectory:
    grid: Grid2D
    times: np.ndarray
    states: list
    duals: list | None
    ladder: Ladder
    tau: float
    step_log: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputs("trajectory times must increase strictly")
        if len(self.states) != len(self.times):
            raise InvalidInputs("one state per time required")
        if self.duals is not None and len(self.duals) != len(self.times):
            raise InvalidInputs("one dual per time required")

    def __len__(self):
        return len(self.times)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    def source_slices(self, f: Source | None = None) -> list:
        """Average source over each snapshot interval; ``None`` for index 0."""
        f = self.ladder.f if f is None else f
        return [None] + [f.average(a, b) for a, b in zip(self.times[:-1], self.times[1:])]


# -- data ladder -------------------------------------------------------------


def jacobi_smooth(u: ScalarField) -> ScalarField:
    """One Jacobi pass of the 5-point heat stencil (weights 1/2, 1/8) with zero ghosts."""
    V = np.pad(u.values, 1)
    s = 0.5 * V[1:-1, 1:-1] + 0.125 * (V[1:-1, 2:] + V[1:-1, :-2] + V[2:, 1:-1] + V[:-2, 1:-1])
    return ScalarField(u.grid, s)


def data_ladder(f, u0: ScalarField, n: int) -> tuple[Source, ScalarField]:
    """Bounded regular approximations ``(T_n f, S T_n u0)`` with ``S`` a Jacobi pass."""
    if not n >= 1:
        raise InvalidRange("ladder level n >= 1")
    f = as_source(f, u0.grid)
    f_n = f.map(lambda v: trunc(n, v))
    u0_n = jacobi_smooth(u0.map(lambda v: trunc(n, v)))
    return f_n, u0_n


def auto_ladder_level(f: Source, u0: ScalarField, T: float, budget: float = 1e-3) -> int:
    """Smallest power of two whose truncation error is within ``budget`` in relative L1.

    Only the truncation part is budgeted; the smoothing pass does not depend
    on the level.
    """
    total = f.time_norm(T) + lp_norm(u0, 1)
    bound = max(f.sup_norm(), float(np.abs(u0.values).max()))
    n = 1
    while n < bound:
        err = f.time_norm(T, other=f.map(lambda v: trunc(n, v))) + lp_norm(
            u0 - u0.map(lambda v: trunc(n, v)), 1)
        if err <= budget * total:
            break
        n *= 2
    return n


def prepare_data(config: SolveConfig) -> Ladder:
    lvl = config.ladder_level
    if lvl is None:
        return Ladder(config.f, config.u0, None)
    if lvl == "auto":
        lvl = auto_ladder_level(config.f, config.u0, config.T)
    f_n, u0_n = data_ladder(config.f, config.u0, lvl)
    return Ladder(f_n, u0_n, lvl)


# -- ROF path ----------------------------------------------------------------


def rof_step(u: ScalarField, f_slice: ScalarField | None, tau: float,
             inner: InnerOptions = InnerOptions(), z0: VectorField | None = None) -> RofResult:
    """One implicit Euler step: ``argmin_v tv(v) + |v - w|^2 / (2 tau)``, ``w = u + tau f``.

    The minimizer is returned as ``w + tau div z`` for the final dual iterate
    ``z`` (so the flux identity holds to rounding even when the inner loop
    stops early); ``converged`` is False if the relative duality gap did not
    reach ``inner.gap_tol`` within ``inner.max_iters``.
    """
    if not tau > 0:
        raise InvalidRange("tau > 0")
    grid = u.grid
    w = u.values if f_slice is None else u.values + tau * f_slice.values
    w = np.ascontiguousarray(w, dtype=float)
    if z0 is None:
        zx = np.zeros((grid.ny + 1, grid.nx + 1))
        zy = np.zeros_like(zx)
    else:
        zx, zy = np.array(z0.x), np.array(z0.y)
    v, gap, its, ok = _kernels.dual_rof(
        w, zx, zy, float(tau), grid.h, np.ascontiguousarray(grid.inside),
        inner.step_for(grid.h, tau), inner.gap_tol, inner.max_iters, inner.check_every,
        inner.accelerated, inner.norm == "anisotropic")
    # the box dual is not inside the Euclidean ball, so only isotropic z is flagged
    unit = inner.norm == "isotropic"
    return RofResult(ScalarField(grid, v), VectorField(grid, zx, zy, unit_ball=unit),
                     float(gap), int(its), bool(ok))


def _step_times(config: SolveConfig) -> np.ndarray:
    return np.arange(config.n_steps + 1) * config.dt


def _snapshot_steps(config: SolveConfig) -> list:
    if config.snapshots is None:
        return list(range(config.n_steps + 1))
    steps = sorted({min(config.n_steps, math.ceil(t / config.dt - 1e-9)) for t in config.snapshots})
    return steps


def evolve(config: SolveConfig) -> Trajectory:
    """March :func:`rof_step` from the (optionally laddered) data.

    Snapshots use the piecewise-constant reconstruction ``u(t) = u^m`` for
    ``t`` in ``(t_{m-1}, t_m]``; a requested time is reported at the end of
    its step.  The dual stored at ``t = 0`` is zero.
    """
    ladder = prepare_data(config)
    grid, dt = config.grid, config.dt
    step_times = _step_times(config)
    wanted = set(_snapshot_steps(config))
    times, states, duals, records = [], [], [], []
    u = ladder.u0
    z = VectorField.zeros(grid, unit_ball=True)
    if 0 in wanted:
        times.append(0.0)
        states.append(u)
        duals.append(z)
    zero_f = ladder.f.is_zero()
    for m in range(1, config.n_steps + 1):
        f_slice = None if zero_f else ladder.f.average(step_times[m - 1], step_times[m])
        res = rof_step(u, f_slice, dt, config.inner, z0=z)
        records.append(StepRecord(m, float(step_times[m]), res.iterations, res.gap, res.converged))
        if not res.converged:
            raise InnerNoConvergence(
                f"inner solver missed gap_tol at step {m} (gap {res.gap:.3e})", step=m, result=res)
        u, z = res.u_next, res.z
        if m in wanted:
            times.append(float(step_times[m]))
            states.append(u)
            duals.append(z)
    log.debug("evolve: %d steps, %d inner iterations", config.n_steps,
              sum(r.iterations for r in records))
    return Trajectory(grid, np.array(times), states, duals, ladder, dt, records)


# -- p-Laplacian path --------------------------------------------------------


@functools.lru_cache(maxsize=8)
def gradient_matrix(grid: Grid2D) -> sp.csr_matrix:
    """Sparse matrix of the discrete gradient restricted to inside cells.

    Rows are the flattened x- then y-components on the dual layout.
    """
    inside = grid.inside
    idx = -np.ones((grid.ny + 2, grid.nx + 2), dtype=np.int64)
    idx[1:-1, 1:-1][inside] = np.arange(grid.n_inside)
    nd = (grid.ny + 1) * (grid.nx + 1)
    rows, cols, vals = [], [], []
    J, I = np.meshgrid(np.arange(grid.ny + 1), np.arange(grid.nx + 1), indexing="ij")
    row = (J * (grid.nx + 1) + I).ravel()
    for offset, (dj, di) in ((0, (0, 1)), (nd, (1, 0))):
        for (sj, si), sign in (((dj, di), 1.0), ((0, 0), -1.0)):
            c = idx[J + sj, I + si].ravel()
            keep = c >= 0
            rows.append(row[keep] + offset)
            cols.append(c[keep])
            vals.append(np.full(keep.sum(), sign / grid.h))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * nd, grid.n_inside))


def plap_diffusivity(u: ScalarField, p: float, eps_reg: float) -> np.ndarray:
    gx, gy = grad_arrays(u.values, u.grid.h)
    return (gx * gx + gy * gy + eps_reg * eps_reg) ** ((p - 2.0) / 2.0)


def plap_step(u: ScalarField, f_slice: ScalarField | None, tau: float, p: float,
              eps_reg: float, rtol: float = 1e-8, maxiter: int | None = None) -> PlapResult:
    """Semi-implicit step ``(v - u)/tau = div(a grad v) + f`` with ``a`` lagged at ``u``."""
    if not 1 < p <= 2:
        raise InvalidRange("1 < p <= 2")
    if not eps_reg > 0:
        raise InvalidRange("eps_reg > 0")
    if not tau > 0:
        raise InvalidRange("tau > 0")
    grid = u.grid
    inside = grid.inside
    rhs = u.values + (0.0 if f_slice is None else tau * f_slice.values)
    b = rhs[inside]
    if not np.any(b):
        return PlapResult(ScalarField.zeros(grid), 0.0, 0, True)
    G = gradient_matrix(grid)
    a = plap_diffusivity(u, p, eps_reg).ravel()
    A = (sp.identity(grid.n_inside, format="csr")
         + tau * (G.T @ sp.diags(np.concatenate([a, a])) @ G)).tocsr()
    precond = sp.diags(1.0 / A.diagonal())
    its = 0

    def count(_):
        nonlocal its
        its += 1

    x, info = cg(A, b, x0=u.values[inside], rtol=rtol, atol=0.0, M=precond,
                 maxiter=maxiter or 10 * grid.n_inside, callback=count)
    residual = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
    values = np.zeros(grid.shape)
    values[inside] = x
    # cg stops on the preconditioned residual; allow a small margin on the true one
    ok = info == 0 and residual <= 10 * rtol
    return PlapResult(ScalarField(grid, values), residual, its, ok)


def default_eps_reg(grid: Grid2D) -> float:
    return 1e-2


def plap_evolve(config: SolveConfig, p: float, eps_reg: float | None = None,
                ladder: Ladder | None = None) -> Trajectory:
    """March :func:`plap_step` at fixed ``p``; duals are not recorded."""
    ladder = prepare_data(config) if ladder is None else ladder
    eps_reg = default_eps_reg(config.grid) if eps_reg is None else eps_reg
    dt = config.dt
    step_times = _step_times(config)
    wanted = set(_snapshot_steps(config))
    u = ladder.u0
    times, states, records = ([0.0], [u], []) if 0 in wanted else ([], [], [])
    zero_f = ladder.f.is_zero()
    for m in range(1, config.n_steps + 1):
        f_slice = None if zero_f else ladder.f.average(step_times[m - 1], step_times[m])
        res = plap_step(u, f_slice, dt, p, eps_reg)
        records.append(StepRecord(m, float(step_times[m]), res.iterations, res.residual,
                                  res.converged))
        if not res.converged:
            raise LinearSolveStagnation(
                f"p-Laplacian linear solve stagnated at step {m} (p={p}, residual "
                f"{res.residual:.3e})", step=m, result=res)
        u = res.u_next
        if m in wanted:
            times.append(float(step_times[m]))
            states.append(u)
    return Trajectory(config.grid, np.array(times), states, None, ladder, dt, records,
                      meta={"p": p, "eps_reg": eps_reg})


def max_l1_distance(a: Trajectory, b: Trajectory) -> float:
    if len(a) != len(b) or not np.allclose(a.times, b.times):
        raise InvalidInputs("trajectories sampled at different times")
    return max(lp_norm(x - y, 1) for x, y in zip(a.states, b.states))


def p_continuation(config: SolveConfig, p_schedule, eps_reg: float | None = None) -> Trajectory:
    """Run the p-Laplacian flow for each ``p`` of a decreasing schedule.

    Returns the trajectory at the last ``p``; ``meta["p_distances"]`` lists
    ``(p, max_t ||u_p - u_prev||_1)`` with ``None`` for the first entry.
    """
    schedule = [float(p) for p in p_schedule]
    if not schedule:
        raise InvalidRange("empty p schedule")
    if any(not 1 < p <= 2 for p in schedule):
        raise InvalidRange("p values must lie in (1, 2]")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidRange("p schedule must decrease strictly")
    ladder = prepare_data(config)
    prev, distances = None, []
    for p in schedule:
        traj = plap_evolve(config, p, eps_reg, ladder)
        distances.append((p, None if prev is None else max_l1_distance(traj, prev)))
        prev = traj
    prev.meta["p_distances"] = distances
    return prev
