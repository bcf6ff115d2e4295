import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from measurefde.stieltjes import (Integrator, IntegrandError,
                                  check_gronwall, gronwall_bound, integrate,
                                  refine_ladder)

IDENTITY = Integrator.identity()


def test_identity_value():
    assert IDENTITY.value_at(3.0) == pytest.approx(3.0, abs=1e-13)


def test_left_continuity_at_jump():
    g = Integrator.pure_jumps([(0.5, 1.0)])
    assert g.value_at(0.5) == 0.0
    assert g.value_at(0.5 + 1e-9) == 1.0


def test_density_plus_jump_value():
    g = Integrator.with_jumps(lambda s: 1.0, [(1.0, 2.0)])
    # density integral 2 plus jump 2
    assert g.value_at(2.0) == pytest.approx(4.0, abs=1e-12)


def test_integrator_validation():
    with pytest.raises(ValueError):
        Integrator.pure_jumps([(0.5, -1.0)])
    with pytest.raises(ValueError):
        Integrator.pure_jumps([(0.5, 1.0), (0.5, 1.0)])
    with pytest.raises(ValueError):
        Integrator.pure_jumps([(1.0, 1.0), (0.5, 1.0)])


def test_constant_integrand_matches_value_difference():
    for g in (IDENTITY,
              Integrator.with_jumps(lambda s: np.exp(s), [(0.3, 0.7), (1.1, 0.1)]),
              Integrator(density=lambda s: s * s, jumps=((0.25, 2.0),))):
        val = float(integrate(lambda s: 1.0, g, 0.0, 2.0)[0])
        assert val == pytest.approx(g.value_at(2.0) - g.value_at(0.0), abs=1e-12)


def test_riemann_case():
    assert float(integrate(lambda s: s, IDENTITY, 0.0, 1.0)[0]) \
        == pytest.approx(0.5, abs=1e-14)


def test_pure_jump_square_against_oracle():
    g = Integrator.pure_jumps([(0.5, 1.0)])
    val = float(integrate(lambda s: s * s, g, 0.0, 1.0)[0])
    ladder = refine_ladder(lambda s: s * s, g, 0.0, 1.0, 4)
    assert val == pytest.approx(0.25, abs=1e-12)
    assert float(ladder[-1][0]) == pytest.approx(val, abs=1e-12)


def test_jump_ownership_endpoints():
    # jump at a is included, jump at b is excluded
    g = Integrator.pure_jumps([(0.0, 1.0), (1.0, 3.0)])
    val = float(integrate(lambda s: 1.0, g, 0.0, 1.0)[0])
    assert val == 1.0


def test_sign_flip_for_reversed_limits():
    fwd = integrate(lambda s: s, IDENTITY, 0.0, 1.0)
    rev = integrate(lambda s: s, IDENTITY, 1.0, 0.0)
    assert float(fwd[0]) == pytest.approx(-float(rev[0]), abs=1e-14)


def test_nonfinite_integrand_rejected():
    with pytest.raises(IntegrandError):
        integrate(lambda s: math.inf, IDENTITY, 0.0, 1.0)


def test_vector_integrand():
    val = integrate(lambda s: np.array([1.0, s]), IDENTITY, 0.0, 1.0)
    assert np.allclose(val, [1.0, 0.5], atol=1e-13)


def test_ladder_constant_exact_every_level():
    g = Integrator.with_jumps(lambda s: 1.0, [(0.4, 0.5)])
    ladder = refine_ladder(lambda s: 3.0, g, 0.0, 1.0, 4)
    expected = 3.0 * (g.value_at(1.0) - g.value_at(0.0))
    for level in ladder:
        assert float(level[0]) == pytest.approx(expected, abs=1e-12)


def test_ladder_error_halves_for_linear_integrand():
    ladder = [float(v[0]) for v in refine_ladder(lambda s: s, IDENTITY, 0.0, 1.0, 5)]
    errors = [abs(v - 0.5) for v in ladder]
    for e_prev, e_next in zip(errors, errors[1:]):
        assert e_next == pytest.approx(e_prev / 2.0, rel=1e-9)


def test_ladder_constant_once_jumps_separated():
    g = Integrator.pure_jumps([(0.3, 1.0), (0.7, 2.0)])
    ladder = [float(v[0]) for v in refine_ladder(lambda s: s, g, 0.0, 1.0, 4)]
    assert ladder[0] == pytest.approx(ladder[-1], abs=1e-12)
    assert ladder[-1] == pytest.approx(0.3 * 1.0 + 0.7 * 2.0, abs=1e-12)


# -- Gronwall ------------------------------------------------------------------


def test_gronwall_zero_initial_bound():
    for xi in (0.0, 0.5, 3.0):
        assert gronwall_bound(0.0, 1.0, IDENTITY, 0.0, xi) == 0.0


def test_gronwall_identity_analytic():
    assert gronwall_bound(1.0, 1.0, IDENTITY, 0.0, 1.0) \
        == pytest.approx(math.e, rel=1e-12)


def test_gronwall_with_jump():
    g = Integrator.with_jumps(lambda s: 1.0, [(0.5, 1.0)])
    # variation over [0, 1] is 2, so the bound is exp(4)
    assert gronwall_bound(1.0, 2.0, g, 0.0, 1.0) \
        == pytest.approx(math.exp(4.0), rel=1e-12)


def test_gronwall_domain_checks():
    with pytest.raises(ValueError):
        gronwall_bound(1.0, 1.0, IDENTITY, 1.0, 0.0)
    with pytest.raises(ValueError):
        gronwall_bound(-1.0, 1.0, IDENTITY, 0.0, 1.0)


def test_check_gronwall_constant_psi_passes():
    rep = check_gronwall(lambda x: 2.0, 2.0, 3.0, IDENTITY, 0.0, 1.0)
    assert rep.status == "ok"
    assert rep.passed


def test_check_gronwall_equality_case():
    rep = check_gronwall(lambda x: math.exp(2.0 * x), 1.0, 2.0,
                         IDENTITY, 0.0, 1.0)
    assert rep.status == "ok"


def test_check_gronwall_flags_broken_hypothesis():
    # grows faster than its own integral inequality allows: hypothesis fails,
    # which is reported, not treated as a bound failure
    rep = check_gronwall(lambda x: math.exp(5.0 * x), 1.0, 1.0,
                         IDENTITY, 0.0, 1.0)
    assert rep.status == "hypothesis-not-satisfied"
    assert rep.passed


# -- property tests -------------------------------------------------------------


def _random_integrator(density_scale: float, jumps: list[tuple[float, float]]):
    cleaned = []
    last = -1.0
    for t, m in sorted(jumps):
        if t > last + 1e-6:
            cleaned.append((t, m))
            last = t
    return Integrator(density=lambda s, a=density_scale: a * (1.0 + np.cos(s) ** 2),
                      jumps=tuple(cleaned))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.lists(st.tuples(st.floats(0.0, 3.0),
                                                st.floats(0.01, 2.0)), max_size=4),
       st.floats(-1.0, 4.0), st.floats(-1.0, 4.0))
def test_eval_monotone(scale, jumps, t1, t2):
    g = _random_integrator(scale, jumps)
    lo, hi = sorted((t1, t2))
    assert g.value_at(lo) <= g.value_at(hi) + 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 2.0), st.lists(st.tuples(st.floats(0.1, 1.9),
                                                st.floats(0.05, 1.0)), max_size=3),
       st.floats(0.3, 1.7))
def test_additivity_split(scale, jumps, b):
    g = _random_integrator(scale, jumps)
    f = lambda s: np.sin(s) + 2.0
    whole = float(integrate(f, g, 0.0, 2.0)[0])
    parts = float(integrate(f, g, 0.0, b)[0]) + float(integrate(f, g, b, 2.0)[0])
    assert whole == pytest.approx(parts, abs=1e-9)


def test_additivity_split_exactly_at_jump():
    g = Integrator.with_jumps(lambda s: 1.0, [(1.0, 2.0)])
    f = lambda s: s + 1.0
    whole = float(integrate(f, g, 0.0, 2.0)[0])
    left = float(integrate(f, g, 0.0, 1.0)[0])      # excludes the jump at 1
    right = float(integrate(f, g, 1.0, 2.0)[0])     # owns the jump at 1
    assert whole == pytest.approx(left + right, abs=1e-12)
    assert right == pytest.approx(2.5 + 2.0 * f(1.0), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_linearity(alpha, beta):
    g = Integrator.with_jumps(lambda s: 1.0, [(0.5, 1.0)])
    f1 = lambda s: np.sin(s)
    f2 = lambda s: s * s
    combo = float(integrate(lambda s: alpha * f1(s) + beta * f2(s), g, 0.0, 1.0)[0])
    split = alpha * float(integrate(f1, g, 0.0, 1.0)[0]) \
        + beta * float(integrate(f2, g, 0.0, 1.0)[0])
    assert combo == pytest.approx(split, abs=2e-9)


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 3), st.floats(0.2, 1.5))
def test_oracle_agrees_with_integrate(poly_degree, scale):
    g = _random_integrator(scale, [(0.6, 0.4)])
    f = lambda s: s ** poly_degree
    val = float(integrate(f, g, 0.0, 2.0)[0])
    ladder = refine_ladder(f, g, 0.0, 2.0, 7)
    assert float(ladder[-1][0]) == pytest.approx(val, abs=5e-3 * max(1.0, abs(val)))


def test_caller_declared_breakpoints_sharpen_discontinuous_integrand():
    # f has a step at 0.3; declaring it as a breakpoint splits the panels
    # there and restores full accuracy
    f = lambda s: 1.0 if s < 0.3 else 2.0
    exact = 0.3 + 2.0 * 0.7
    with_bp = float(integrate(f, IDENTITY, 0.0, 1.0, breakpoints=(0.3,))[0])
    assert with_bp == pytest.approx(exact, abs=1e-12)


def test_check_gronwall_with_jumpy_integrator():
    # sharp solution of psi = 1 + 2 int psi dg for g with a unit jump at 0.5:
    # exponential in the continuous part, factor (1 + 2 * jump) at the jump;
    # it satisfies the hypothesis with equality and stays under the bound
    g = Integrator.with_jumps(lambda s: 1.0, [(0.5, 1.0)])
    psi = lambda x: math.exp(2.0 * x) * (3.0 if x > 0.5 else 1.0)
    rep = check_gronwall(psi, 1.0, 2.0, g, 0.0, 1.0)
    assert rep.status == "ok"
    # the exponential bound is not attained across the jump
    i = int(np.argmin(np.abs(rep.times - 1.0)))
    assert rep.psi_values[i] < rep.bound_values[i]


def test_nonfinite_density_rejected():
    from measurefde.stieltjes import IntegratorDomainError
    g = Integrator(density=lambda s: np.inf)
    with pytest.raises(IntegratorDomainError):
        g.value_at(1.0)
    with pytest.raises(IntegratorDomainError):
        g.values_at(np.array([0.5, 1.0]))
