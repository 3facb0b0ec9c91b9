"""End-to-end experiments: comparison, contraction, a priori bounds, L^r
Cauchy estimate, Gagliardo-Nirenberg ratio, decay rates and agreement of the
two solution routes.

Every pass criterion is an inequality with explicit slack.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calculus import tv
from .errors import GNAnomaly, InvalidInputs, InvalidRange
from .grid import ScalarField, gk, lp_norm
from .solvers import (
    SolveConfig, Source, Trajectory, as_source, data_ladder, evolve, max_l1_distance,
    p_continuation,
)

#: Reported in place of an infinite margin.
MARGIN_SENTINEL = 1e300

#: Frozen after calibration on the 64^2 disk, tau = 2e-3, p_min = 1.05
#: reference (observed ratio 0.31, doubled and rounded).
C_UNIQUENESS = 0.6
#: Discretization allowance in the L^r Cauchy estimate.  Frozen after
#: calibration on the 64^2 spike (scale 0.05), r = 1.2, levels (4, 8)
#: reference (observed excess 0.0059 (h + tau)).
C_REGULARITY = 1e-2


@dataclass
class ExperimentReport:
    name: str
    digest: str
    passed: bool
    worst_margin: float
    table: list = field(default_factory=list)
    trend: list | None = None
    trend_monotone: bool | None = None

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} worst_margin={self.worst_margin:.6g} digest={self.digest}"


def digest(*items) -> str:
    h = hashlib.sha256()
    for item in items:
        if isinstance(item, ScalarField):
            h.update(item.values.tobytes())
        elif isinstance(item, Source):
            h.update(repr(item.knots).encode())
            for f in item.fields:
                h.update(f.values.tobytes())
        elif isinstance(item, SolveConfig):
            h.update(repr((item.grid.nx, item.grid.ny, item.grid.h, item.T, item.tau,
                           item.ladder_level, item.inner)).encode())
        else:
            h.update(repr(item).encode())
    return h.hexdigest()[:12]


def _clip(m):
    return MARGIN_SENTINEL if math.isinf(m) else m


def monotone(values, rtol: float = 0.0) -> bool:
    """True if ``values`` is nonincreasing or nondecreasing (up to ``rtol``)."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    slack = rtol * np.abs(v[:-1])
    return bool(np.all(d <= slack) or np.all(d >= -slack))


# -- decay -------------------------------------------------------------------


@dataclass(frozen=True)
class DecayParams:
    N: float
    r0: float
    r: float
    h0: float
    h1: float
    C: float

    def bound(self, u0_norm: float, t: float) -> float:
        return self.C * u0_norm ** float(self.h0) / t ** float(self.h1)


def decay_exponents(N, r0, r) -> DecayParams:
    """Exponents of the decay bound ``||u(t)||_r <= C ||u0||_{r0}^h0 / t^h1``.

    Exact when the inputs are ints or :class:`fractions.Fraction` (``h0``
    and ``h1`` come back as fractions; ``C`` is always a float, ``inf`` past
    the float range).
    """
    if not N >= 2:
        raise InvalidRange("N >= 2 required")
    if not 1 < r < r0 < 2:
        raise InvalidRange("1 < r < r0 < 2 required")
    if not N > r0:
        raise InvalidRange("N > r0 required")
    h0 = r0 * (N - r) / (r * (N - r0))
    h1 = N * (r0 - r) / (r * (N - r0))
    base = N * (r0 - r) / (N - r0)
    try:
        C = float(base) ** float(h1)
    except OverflowError:  # r0 close to N blows the exponent up
        C = math.inf
    return DecayParams(N, r0, r, h0, h1, C)


def decay_experiment(u0: ScalarField, params: DecayParams, config: SolveConfig,
                     tol_decay: float = 0.05, t_min: float | None = None) -> ExperimentReport:
    """Homogeneous flow from ``u0``; check the decay bound for ``t >= t_min`` (default ``2 tau``)."""
    if params.N != 2:
        raise InvalidRange("dynamic decay check needs N = 2")
    traj = evolve(config.with_(u0=u0, f=None))
    t_min = 2 * traj.tau if t_min is None else t_min
    norm0 = lp_norm(u0, float(params.r0))
    rows, worst = [], math.inf
    for t, s in zip(traj.times, traj.states):
        if t < t_min - 1e-12:
            continue
        value = lp_norm(s, float(params.r))
        bound = (1 + tol_decay) * params.bound(norm0, t)
        margin = bound - value if norm0 > 0 else math.inf
        rows.append({"t": float(t), "norm_r": value, "bound": bound, "margin": _clip(margin)})
        worst = min(worst, margin)
    return ExperimentReport("decay", digest(u0, params, config), worst >= 0, _clip(worst), rows)


# -- comparison / contraction / a priori bounds ------------------------------


def _data(d, grid):
    u0, f = d
    return u0, as_source(f, grid)


def _source_ordered(f1: Source, f2: Source, T: float) -> bool:
    cuts = sorted({t for t in f1.knots + f2.knots if t < T} | {T})
    return all(np.all(f1.average(a, b).values <= f2.average(a, b).values)
               for a, b in zip(cuts, cuts[1:]))


#: Inner gap used by the pairwise experiments; their 1e-6 criteria sit just
#: above the default gap, where inexact steps alone can break the ordering.
#: The per-face scheme converges much faster and affords a tighter target.
PAIRWISE_GAP_TOL = {"isotropic": 1e-8, "anisotropic": 1e-10}


def _tight(config: SolveConfig) -> SolveConfig:
    inner = config.inner
    target = PAIRWISE_GAP_TOL[inner.norm]
    if inner.gap_tol <= target:
        return config
    return config.with_(inner=replace(inner, gap_tol=target,
                                      max_iters=max(inner.max_iters, 200000)))


def comparison_experiment(data1, data2, config: SolveConfig) -> ExperimentReport:
    """Ordered data give ordered solutions: ``max (u1 - u2)^+ <= 1e-6 scale``.

    Steps are solved to an inner gap of at most :data:`PAIRWISE_GAP_TOL` (per norm).
    """
    config = _tight(config)
    (a0, f1), (b0, f2) = _data(data1, config.grid), _data(data2, config.grid)
    if not (np.all(a0.values <= b0.values) and _source_ordered(f1, f2, config.T)):
        raise InvalidInputs("comparison needs u0_1 <= u0_2 and f_1 <= f_2")
    t1 = evolve(config.with_(u0=a0, f=f1))
    t2 = evolve(config.with_(u0=b0, f=f2))
    scale = max(1.0, max(float(np.abs(u.values).max()) + config.T * f.sup_norm()
                         for u, f in ((a0, f1), (b0, f2))))
    tol = 1e-6 * scale
    rows = []
    for t, x, y in zip(t1.times, t1.states, t2.states):
        rows.append({"t": float(t), "max_positive_part": float(np.maximum(x.values - y.values, 0).max())})
    worst = max(r["max_positive_part"] for r in rows)
    return ExperimentReport("comparison", digest(a0, f1, b0, f2, config), worst <= tol,
                            tol - worst, rows)


def contraction_experiment(data1, data2, config: SolveConfig,
                           abs_tol: float = 1e-10) -> ExperimentReport:
    """``max_t ||u1 - u2||_1 <= int ||f1 - f2||_1 + ||u0_1 - u0_2||_1`` (solved data).

    Steps are solved to an inner gap of at most :data:`PAIRWISE_GAP_TOL` (per norm).
    """
    config = _tight(config)
    (a0, f1), (b0, f2) = _data(data1, config.grid), _data(data2, config.grid)
    t1 = evolve(config.with_(u0=a0, f=f1))
    t2 = evolve(config.with_(u0=b0, f=f2))
    rhs = (t1.ladder.f.time_norm(config.T, 1, other=t2.ladder.f)
           + lp_norm(t1.ladder.u0 - t2.ladder.u0, 1))
    rows = [{"t": float(t), "l1_distance": lp_norm(x - y, 1)}
            for t, x, y in zip(t1.times, t1.states, t2.states)]
    lhs = max(r["l1_distance"] for r in rows)
    allowed = rhs * (1 + 1e-6) + abs_tol
    for r in rows:
        r["rhs"] = rhs
    return ExperimentReport("contraction", digest(a0, f1, b0, f2, config), lhs <= allowed,
                            allowed - lhs, rows)


def l1_bound_check(traj: Trajectory, f=None, rel_slack: float = 1e-6) -> ExperimentReport:
    """``||u(t)||_1 <= ||u0||_1 + int_0^t ||f||_1`` at every snapshot."""
    f = traj.ladder.f if f is None else as_source(f, traj.grid)
    u0_norm = lp_norm(traj.ladder.u0, 1)
    rows, worst = [], math.inf
    for t, s in zip(traj.times, traj.states):
        bound = u0_norm + (f.time_norm(t, 1) if t > 0 else 0.0)
        value = lp_norm(s, 1)
        margin = bound * (1 + rel_slack) - value
        rows.append({"t": float(t), "l1_norm": value, "bound": bound, "margin": margin})
        worst = min(worst, margin)
    return ExperimentReport("l1_bound", digest(traj.ladder.u0, f), worst >= 0, worst, rows)


def boundedness_check(traj: Trajectory, f=None) -> ExperimentReport:
    """``sup_t ||u(t)||_inf <= ||u0||_inf + T ||f||_inf + 1e-8``."""
    f = traj.ladder.f if f is None else as_source(f, traj.grid)
    bound = float(np.abs(traj.ladder.u0.values).max()) + traj.T * f.sup_norm() + 1e-8
    rows = [{"t": float(t), "sup_norm": float(np.abs(s.values).max()), "bound": bound}
            for t, s in zip(traj.times, traj.states)]
    worst = bound - max(r["sup_norm"] for r in rows)
    return ExperimentReport("boundedness", digest(traj.ladder.u0, f), worst >= 0, worst, rows)


# -- L^r Cauchy estimate -----------------------------------------------------


def regularity_cauchy_experiment(r: float, n: int, m: int, config: SolveConfig,
                                 c_disc: float = C_REGULARITY) -> ExperimentReport:
    """Ladder levels ``n <= m`` on the config's data.

    Pass iff ``max_t ||u_n - u_m||_r <= ||u_n(0) - u_m(0)||_r +
    int ||f_n - f_m||_r dt`` with relative slack 1e-6 plus ``c_disc (h + tau)``.
    """
    if not 1 < r < 2:
        raise InvalidRange("1 < r < 2 required")
    if not 1 <= n <= m:
        raise InvalidRange("ladder levels must satisfy 1 <= n <= m")
    tn = evolve(config.with_(ladder_level=n))
    tm = tn if m == n else evolve(config.with_(ladder_level=m))
    rhs = (lp_norm(tn.ladder.u0 - tm.ladder.u0, r)
           + tn.ladder.f.time_norm(config.T, r, other=tm.ladder.f))
    rows = [{"t": float(t), "lr_distance": lp_norm(x - y, r)}
            for t, x, y in zip(tn.times, tn.states, tm.states)]
    lhs = max(row["lr_distance"] for row in rows)
    allowed = rhs * (1 + 1e-6) + c_disc * (config.grid.h + config.dt)
    for row in rows:
        row["rhs"] = rhs
    return ExperimentReport(f"regularity_r{r}_n{n}_m{m}",
                            digest(config.u0, config.f, config, r, n, m),
                            lhs <= allowed, allowed - lhs, rows)


def ladder_rhs(config: SolveConfig, r: float, n: int, m: int) -> float:
    """Right side of the Cauchy estimate for ladder levels ``n, m`` (no solve)."""
    fn, un = data_ladder(config.f, config.u0, n)
    fm, um = data_ladder(config.f, config.u0, m)
    return lp_norm(un - um, r) + fn.time_norm(config.T, r, other=fm)


# -- Gagliardo-Nirenberg ratio -----------------------------------------------


def gn_terms(traj: Trajectory, k: float, N: int = 2) -> tuple[float, float, float]:
    """``(LHS, sup_t int |G_k u|, int_0^T tv(G_k u) dt)`` with right-endpoint quadrature."""
    q = (N + 1) / N
    lhs = sup = tvint = 0.0
    for m in range(1, len(traj)):
        dt = traj.times[m] - traj.times[m - 1]
        G = traj.states[m].map(lambda v: gk(k, v)) if k > 0 else traj.states[m]
        lhs += dt * lp_norm(G, q) ** q
        sup = max(sup, lp_norm(G, 1))
        tvint += dt * tv(G)
    return lhs, sup, tvint


def gn_ratio(traj: Trajectory, k: float, N: int = 2) -> float | None:
    lhs, sup, tvint = gn_terms(traj, k, N)
    if lhs == 0:
        return None
    if tvint == 0:
        raise GNAnomaly("positive left side with zero total variation term")
    return lhs / (sup ** (1.0 / N) * tvint)


def gn_check(trajs, k: float, growth: float = 1.2) -> ExperimentReport:
    """Ratio boundedness along a refinement sequence (coarse to fine)."""
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    if k < 0:
        raise InvalidRange("k >= 0 required")
    ratios = [gn_ratio(t, k) for t in trajs]
    rows = [{"h": t.grid.h, "tau": t.tau, "ratio": math.nan if q is None else q}
            for t, q in zip(trajs, ratios)]
    live = [q for q in ratios if q is not None]
    if not live:
        return ExperimentReport("gn", digest(k, len(trajs)), True, MARGIN_SENTINEL, rows)
    margins = [growth * a - b for a, b in zip(live, live[1:])] or [MARGIN_SENTINEL]
    worst = min(margins)
    return ExperimentReport("gn", digest(k, *live), worst >= 0, worst, rows,
                            trend=live, trend_monotone=monotone(live))


# -- agreement of the two routes ---------------------------------------------


def uniqueness_tolerance(h: float, tau: float, p_min: float, C: float = C_UNIQUENESS) -> float:
    return C * (h + tau + (p_min - 1))


def uniqueness_proxy(config: SolveConfig, p_schedule, eps_reg: float | None = None,
                     C: float = C_UNIQUENESS) -> ExperimentReport:
    """Distance between the ROF trajectory and the p-continuation at the last ``p``."""
    rof = evolve(config)
    plap = p_continuation(config, p_schedule, eps_reg)
    dist = max_l1_distance(rof, plap)
    p_min = float(list(p_schedule)[-1])
    tol = uniqueness_tolerance(config.grid.h, config.dt, p_min, C)
    rows = [{"t": float(t), "l1_distance": lp_norm(a - b, 1)}
            for t, a, b in zip(rof.times, rof.states, plap.states)]
    report = ExperimentReport("uniqueness", digest(config, tuple(p_schedule)), dist <= tol,
                              tol - dist, rows)
    report.trend = [d for _, d in plap.meta["p_distances"] if d is not None]
    report.trend_monotone = monotone(report.trend) if report.trend else None
    return report
