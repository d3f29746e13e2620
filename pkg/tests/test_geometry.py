import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from iukit.errors import ConfigError, DomainError
from iukit.geometry import (Ball, Box, GrowthFunction, HalfSpace, Horn, ReferenceFunction, Ring, WholeSpace,
                            boundary_distance, kappa_fat_probe, killing_potential, reference_envelopes,
                            region_contains, vd_lower_bound)
from iukit.kernels import JumpKernel, ScalingFunction, TemperingFunction


PHI1 = ScalingFunction.power(1.0)


def horn(expr, dim=2):
    return Horn(ReferenceFunction("expr", expr=expr), dim)


def ring12(dim=2):
    return Ring(GrowthFunction("expr", expr="12 + 0*s"), dim)


# ---------------------------------------------------------------------------
# membership and distance
# ---------------------------------------------------------------------------
def test_horn_membership_examples():
    D = horn("1/(1+s)")
    assert region_contains(D, [1.0, 0.4])
    assert not region_contains(D, [-1.0, 0.0])
    assert not region_contains(D, [1.0, 0.5])


def test_ring_membership_inside_first_subshell():
    D = ring12()
    r = 5 + 1 / (4 * 12)
    assert region_contains(D, [r, 0.0])
    # the matching gap point half a subshell further out
    assert not region_contains(D, [5 + 0.75 / 12, 0.0])


def test_ring_rejects_small_growth():
    with pytest.raises(ConfigError):
        Ring(GrowthFunction("expr", expr="5 + 0*s"), 2)


def test_distance_examples():
    assert boundary_distance(Ball([0.0, 0.0], 2.0), [0.0, 0.0]) == 2.0
    assert boundary_distance(horn("0.5 + 0*s"), [10.0, 0.0]) == pytest.approx(0.5, abs=1e-12)


def test_distance_outside_is_error():
    with pytest.raises(DomainError):
        boundary_distance(Ball([0.0, 0.0], 1.0), [2.0, 0.0])


def test_horn_exp_distance_against_brute_force():
    D = horn("exp(-s)")
    s = np.linspace(0.0, 10.0, 1_000_000)
    oracle = min(np.min(np.hypot(3.0 - s, np.exp(-s))), 3.0)
    assert boundary_distance(D, [3.0, 0.0]) == pytest.approx(oracle, abs=1e-6)


def test_ring_distance_closed_form():
    D = ring12()
    r = 5 + 0.1 / 12
    assert boundary_distance(D, [0.0, r]) == pytest.approx(0.1 / 12, rel=1e-9)


# ---------------------------------------------------------------------------
# killing potential
# ---------------------------------------------------------------------------
def test_killing_potential_whole_space_zero():
    assert killing_potential(JumpKernel(2, PHI1), WholeSpace(2), [0.3, 0.1]) == 0.0


def test_killing_potential_half_line_closed_form():
    k = JumpKernel(1, PHI1)
    assert killing_potential(k, HalfSpace([-1.0]), [2.0]) == pytest.approx(0.5, rel=1e-10)


def test_killing_potential_ball_against_quad():
    # d=2 ball, polar quadrature oracle with an independent inner integral
    k = JumpKernel(2, PHI1)
    x = np.array([0.4, 0.0])

    def ray(th):
        # int_a^inf q * q^{-3} dq with a the exit distance along the ray
        b = x[0] * math.cos(th)
        a = -b + math.sqrt(b * b - (x @ x - 1.0))
        return 1.0 / a

    oracle, _ = integrate.quad(ray, 0, 2 * math.pi, limit=200, epsabs=1e-12)
    assert killing_potential(k, Ball([0.0, 0.0], 1.0), x) == pytest.approx(oracle, rel=1e-6)


def test_killing_potential_horn_times_phi_bounded_below():
    k = JumpKernel(2, PHI1)
    D = horn("1/(1+s)")
    vals = []
    for s in (5.0, 20.0, 80.0):
        x = [s, 0.0]
        vals.append(killing_potential(k, D, x) * boundary_distance(D, x))
    assert min(vals) > 0.5


def test_killing_potential_finite_range_ball():
    k = JumpKernel(2, PHI1, TemperingFunction.finite_range())
    v_inf = killing_potential(JumpKernel(2, PHI1), Ball([0.0, 0.0], 1.0), [0.5, 0.0])
    v_fin = killing_potential(k, Ball([0.0, 0.0], 1.0), [0.5, 0.0])
    assert 0 < v_fin < v_inf


def test_ring_killing_grows_along_shells():
    k = JumpKernel(2, PHI1)
    D = Ring(GrowthFunction("expr", expr="12 + s"), 2)
    vals = []
    for n in (2, 8, 32):
        H = float(D.H(n))
        vals.append(killing_potential(k, D, [n + 0.25 / H, 0.0], rtol=1e-4) / H)
    assert all(v > 0 for v in vals)
    assert min(vals) > 0.2 * max(vals)


# ---------------------------------------------------------------------------
# fatness and the V_D lower bound
# ---------------------------------------------------------------------------
def test_fat_probe_horn_complement():
    D = horn("1/(1+s)")
    z = np.array([5.0, 1.0 / 6.0])
    from iukit.geometry import Complement
    probe = kappa_fat_probe(Complement(D), z, 0.1, 0.25)
    assert probe.found


def test_fat_probe_half_space_depth():
    U = HalfSpace([1.0, 0.0])  # x1 < 0
    probe = kappa_fat_probe(U, [0.0, 0.0], 1.0, 0.5)
    assert probe.found
    assert probe.witness[0] <= -0.5 + 1e-12


def test_fat_probe_thin_cusp_none():
    cusp = horn("0.05*exp(-s)")
    probe = kappa_fat_probe(cusp, [0.5, 0.0], 1.0, 0.99)
    assert not probe.found


def test_vd_lower_bound_phi_scaling():
    D = Box([-10.0, -10.0], [0.0, 10.0])
    from iukit.geometry import Complement
    U = Complement(D)
    for delta in (0.1, 0.05):
        x = np.array([-delta, 0.0])
        z = np.array([0.0, 0.0])
        probe = kappa_fat_probe(U, z, delta, 0.5)
        b = vd_lower_bound(PHI1, D, x, probe)
        # for a fixed kappa the bound is c / Phi(2 delta)
        assert b * 2 * delta == pytest.approx(math.pi * 0.25 / 4, rel=1e-12)


def test_vd_lower_bound_rejects_deep_points():
    D = Ball([0.0, 0.0], 2.0)
    from iukit.geometry import Complement
    probe = kappa_fat_probe(Complement(D), [2.0, 0.0], 0.5, 0.5)
    x = [1.5, 0.0]
    assert vd_lower_bound(PHI1, D, x, probe) > 0
    with pytest.raises(DomainError):
        vd_lower_bound(PHI1, D, [1.4, 0.0], probe)


def test_killing_exceeds_calibrated_lower_bound():
    from iukit.geometry import Complement
    k = JumpKernel(2, PHI1)
    D = horn("1/(1+s)")
    U = Complement(D)

    def both(x):
        z = D.nearest_boundary_point(np.atleast_2d(x))[0]
        delta = boundary_distance(D, x)
        probe = kappa_fat_probe(U, z, delta, 0.25)
        return killing_potential(k, D, x), vd_lower_bound(PHI1, D, x, probe)

    v0, b0 = both(np.array([3.0, 0.1]))
    c = v0 / b0
    v, b = both(np.array([9.0, 0.05]))
    assert v >= 0.5 * c * b


# ---------------------------------------------------------------------------
# reference envelopes
# ---------------------------------------------------------------------------
def test_reference_envelopes_monotone_profile():
    f = ReferenceFunction("exp", theta=1.0)
    up, lo = reference_envelopes(f, 2.0)
    assert float(up) == pytest.approx(math.exp(-2))
    assert float(lo) == pytest.approx(math.exp(-2))


def test_reference_envelopes_constant():
    f = ReferenceFunction("expr", expr="0.3 + 0*s")
    up, lo = reference_envelopes(f, [0.5, 3.0, 40.0])
    assert np.allclose(up, 0.3) and np.allclose(lo, 0.3)


def test_reference_envelopes_oscillating_against_dense_grid():
    f = ReferenceFunction("expr", expr="(2 + sin(s))/(1 + s)")
    r = np.array([1.5, 4.0, 9.0, 20.0])
    up, lo = reference_envelopes(f, r)
    for ri, u, l in zip(r, up, lo):
        s_up = np.linspace(ri, ri + 50, 2_000_001)
        s_lo = np.linspace(1.0, ri, 2_000_001)
        fu = (2 + np.sin(s_up)) / (1 + s_up)
        fl = (2 + np.sin(s_lo)) / (1 + s_lo)
        assert u == pytest.approx(fu.max(), rel=1e-9)
        assert l == pytest.approx(fl.min(), rel=1e-9)
        fr = (2 + math.sin(ri)) / (1 + ri)
        assert l <= fr <= u
    assert np.all(np.diff(up) <= 0) and np.all(np.diff(lo) <= 0)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------
_HORN = horn("1/(1+s)")
_K = JumpKernel(2, ScalingFunction.power(1.0))


@given(a=st.floats(0.01, 50.0), frac=st.floats(0.0, 0.999))
def test_horn_distance_positive_and_below_profile(a, frac):
    f = 1.0 / (1.0 + a)
    x = [a, frac * f]
    assume(region_contains(_HORN, x))
    d = boundary_distance(_HORN, x)
    assert d > 0
    if frac == 0.0:
        assert d <= f + 1e-12


@given(a=st.floats(0.5, 20.0), eps=st.floats(1e-9, 1e-3))
def test_horn_distance_vanishes_at_boundary(a, eps):
    f = 1.0 / (1.0 + a)
    x = [a, f * (1 - eps)]
    assert boundary_distance(_HORN, x) <= f * eps + 1e-12


_BIG = Ball([0.0, 0.0], 3.0)
_SMALL = Ball([0.2, 0.0], 1.0)


@given(r=st.floats(0.0, 0.9), th=st.floats(0.0, 2 * math.pi))
def test_killing_monotone_under_shrinkage(r, th):
    x = np.array([0.2 + r * math.cos(th), r * math.sin(th)])
    v_small = killing_potential(_K, _SMALL, x, n_dirs=512)
    v_big = killing_potential(_K, _BIG, x, n_dirs=512)
    assert v_small >= v_big * (1 - 1e-9)
