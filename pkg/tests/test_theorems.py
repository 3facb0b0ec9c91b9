import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from tvflow.errors import InvalidInputs, InvalidRange
from tvflow.grid import Grid2D, ScalarField, Shape, make_field
from tvflow.solvers import SolveConfig, evolve
from tvflow.theorems import (
    MARGIN_SENTINEL, boundedness_check, comparison_experiment, contraction_experiment,
    decay_exponents, decay_experiment, digest, gn_check, gn_ratio, gn_terms, l1_bound_check,
    ladder_rhs, monotone, regularity_cauchy_experiment, uniqueness_tolerance,
)


def admissible_triple(rng):
    N = int(rng.integers(2, 7))
    a, b = sorted(Fraction(int(x), 997) for x in rng.choice(np.arange(1, 997), 2, replace=False))
    return N, 1 + b, 1 + a  # 1 < r < r0 < 2 <= N


@pytest.fixture(scope="module")
def sym():
    N, r0, r = sympy.symbols("N r0 r", positive=True)
    h0 = r0 * (N - r) / (r * (N - r0))
    h1 = N * (r0 - r) / (r * (N - r0))
    C = (N * (r0 - r) / (N - r0)) ** h1
    return (N, r0, r), (h0, h1, C)


# -- decay exponents ---------------------------------------------------------


def test_decay_exponents_match_symbolic_substitution(sym):
    rng = np.random.default_rng(2024)
    syms, (h0, h1, C) = sym
    for _ in range(1000):
        triple = admissible_triple(rng)
        sub = dict(zip(syms, (sympy.Rational(x.numerator, x.denominator) if isinstance(x, Fraction)
                              else sympy.Integer(x) for x in triple)))
        p = decay_exponents(*triple)
        assert isinstance(p.h0, Fraction) and isinstance(p.h1, Fraction)
        assert sympy.Rational(p.h0.numerator, p.h0.denominator) == h0.subs(sub)
        assert sympy.Rational(p.h1.numerator, p.h1.denominator) == h1.subs(sub)
        ref = C.evalf(30, subs=sub)
        if ref > sympy.Float(np.finfo(float).max):
            assert p.C == math.inf
        else:
            # x**y amplifies input rounding by y and y ln x
            y = float(p.h1)
            cond = 1 + y + abs(y * math.log(float(p.N * (p.r0 - p.r) / (p.N - p.r0))))
            assert p.C == pytest.approx(float(ref), rel=4 * np.finfo(float).eps * cond)


@pytest.mark.parametrize("N,r0,r,expected", [
    (2, 1.5, 1.2, (2.0, 1.0, 1.2)),
    (3, 1.5, 1.2, (1.5, 0.5, math.sqrt(0.6))),
])
def test_decay_exponent_examples(N, r0, r, expected):
    p = decay_exponents(N, r0, r)
    assert (p.h0, p.h1, p.C) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("N,r0,r", [(2, 1.2, 1.5), (2, 2.0, 1.2), (1, 1.5, 1.2), (2, 1.5, 1.0),
                                    (2, 1.5, 1.5)])
def test_decay_exponent_ranges(N, r0, r):
    with pytest.raises(InvalidRange):
        decay_exponents(N, r0, r)


@given(st.integers(2, 10), st.fractions(1, 2), st.fractions(1, 2))
def test_decay_exponents_respect_scalings(N, a, b):
    r, r0 = sorted((a, b))
    if not 1 < r < r0 < 2:
        return
    p = decay_exponents(N, r0, r)
    # amplitude scaling a u(t / a) and parabolic space-time scaling u(t / b, x / b)
    assert p.h0 - p.h1 == 1
    assert Fraction(N) / r + p.h1 == N * p.h0 / r0
    assert p.h0 > 0 and p.h1 > 0 and p.C > 0


def test_decay_bound_evaluation():
    p = decay_exponents(2, 1.5, 1.2)
    assert p.bound(2.0, 0.5) == pytest.approx(1.2 * 4.0 / 0.5)


@pytest.fixture(scope="module")
def small():
    g = Grid2D.unit_square(32)
    return g, SolveConfig(g, 0.05, 2.5e-3, make_field(g, Shape.disk((0.5, 0.5), 0.25, 1.0)))


def test_decay_experiment_on_disk(small):
    g, cfg = small
    rep = decay_experiment(cfg.u0, decay_exponents(2, 1.5, 1.2), cfg)
    assert rep.passed and rep.worst_margin >= 0
    assert all(row["t"] >= 2 * cfg.tau - 1e-12 for row in rep.table)


def test_decay_experiment_zero_data(small):
    g, cfg = small
    rep = decay_experiment(ScalarField.zeros(g), decay_exponents(2, 1.5, 1.2), cfg)
    assert rep.passed and rep.worst_margin == MARGIN_SENTINEL


def test_decay_experiment_needs_planar_exponents(small):
    _, cfg = small
    with pytest.raises(InvalidRange):
        decay_experiment(cfg.u0, decay_exponents(3, 1.5, 1.2), cfg)


# -- comparison / contraction / bounds ---------------------------------------


def test_comparison_zero_data(small):
    g, cfg = small
    zero = ScalarField.zeros(g)
    rep = comparison_experiment((zero, None), (zero, None), cfg)
    assert rep.passed and all(r["max_positive_part"] == 0 for r in rep.table)


def test_comparison_ordered_data(small):
    g, cfg = small
    lo = make_field(g, Shape.disk((0.5, 0.5), 0.2, 0.5))
    rep = comparison_experiment((lo, None), (cfg.u0, make_field(g, Shape.constant(0.5))), cfg)
    assert rep.passed, rep.summary()


def test_comparison_rejects_unordered(small):
    g, cfg = small
    lo = make_field(g, Shape.disk((0.5, 0.5), 0.2, 0.5))
    with pytest.raises(InvalidInputs):
        comparison_experiment((cfg.u0, None), (lo, None), cfg)
    with pytest.raises(InvalidInputs):
        comparison_experiment((cfg.u0, make_field(g, Shape.constant(1.0))), (cfg.u0, None), cfg)


def test_contraction_identical_data(small):
    _, cfg = small
    rep = contraction_experiment((cfg.u0, None), (cfg.u0, None), cfg)
    assert rep.passed and all(r["l1_distance"] == 0 for r in rep.table)


def test_contraction_random_pair(small):
    g, cfg = small
    a = make_field(g, Shape.random(1, 1.0))
    b = make_field(g, Shape.random(2, 1.0))
    rep = contraction_experiment((a, None), (b, make_field(g, Shape.constant(0.3))), cfg)
    assert rep.passed, rep.summary()
    assert rep.table[0]["l1_distance"] <= rep.table[0]["rhs"]


def test_a_priori_bounds(small):
    g, cfg = small
    f = make_field(g, Shape.constant(0.4))
    traj = evolve(cfg.with_(f=f))
    assert l1_bound_check(traj).passed
    assert boundedness_check(traj).passed
    zero = evolve(cfg.with_(u0=ScalarField.zeros(g)))
    rep = l1_bound_check(zero)
    assert rep.passed and all(r["l1_norm"] == 0 for r in rep.table)


# -- L^r Cauchy estimate -----------------------------------------------------


@pytest.mark.parametrize("r,n,m", [(1.0, 4, 8), (2.0, 4, 8), (1.5, 8, 4), (1.5, 0, 4)])
def test_regularity_ranges(small, r, n, m):
    _, cfg = small
    with pytest.raises(InvalidRange):
        regularity_cauchy_experiment(r, n, m, cfg)


def test_regularity_same_level_is_trivial(small):
    g, _ = small
    cfg = SolveConfig(g, 0.02, 2.5e-3, make_field(g, Shape.spike((0.5, 0.5), 1.0, 0.05)))
    rep = regularity_cauchy_experiment(1.2, 4, 4, cfg)
    assert rep.passed and all(row["lr_distance"] == 0 for row in rep.table)


def test_regularity_spike(small):
    g, _ = small
    spike = make_field(g, Shape.spike((0.5, 0.5), 1.0, 0.05))
    cfg = SolveConfig(g, 0.02, 2.5e-3, spike, f=spike * 0.5)
    rep = regularity_cauchy_experiment(1.2, 2, 4, cfg)
    assert rep.table[0]["rhs"] == pytest.approx(ladder_rhs(cfg, 1.2, 2, 4), rel=1e-12)
    assert rep.passed, rep.summary()


# -- Gagliardo-Nirenberg -----------------------------------------------------


def test_gn_zero_data_vacuous(small):
    g, cfg = small
    zero = evolve(cfg.with_(u0=ScalarField.zeros(g)))
    assert gn_ratio(zero, 0.5) is None
    rep = gn_check(zero, 0.5)
    assert rep.passed and rep.worst_margin == MARGIN_SENTINEL


def test_gn_k_above_sup_is_vacuous(small):
    _, cfg = small
    traj = evolve(cfg)
    assert gn_terms(traj, 2.0)[0] == 0
    assert gn_check([traj], 2.0).passed


def test_gn_ratio_amplitude_invariant(small):
    _, cfg = small
    # a u(t / a) solves the flow and both sides of the ratio scale like a^(q + 1)
    a = evolve(cfg)
    b = evolve(cfg.with_(u0=cfg.u0 * 2.0, T=2 * cfg.T, tau=2 * cfg.tau))
    assert gn_ratio(b, 0.0) == pytest.approx(gn_ratio(a, 0.0), rel=1e-5)


def test_gn_rejects_negative_level(small):
    _, cfg = small
    with pytest.raises(InvalidRange):
        gn_check([], -1.0)


# -- helpers -----------------------------------------------------------------


def test_uniqueness_tolerance():
    assert uniqueness_tolerance(0.1, 0.01, 1.05, C=2.0) == pytest.approx(2 * 0.16)


@pytest.mark.parametrize("values,expected", [
    ([3, 2, 2, 1], True), ([1, 2, 3], True), ([1, 3, 2], False), ([5], True),
])
def test_monotone(values, expected):
    assert monotone(values) is expected


def test_digest_is_stable(small):
    _, cfg = small
    assert digest(cfg.u0, cfg) == digest(cfg.u0, cfg)
    assert digest(cfg.u0) != digest(cfg.u0 * 2.0)
