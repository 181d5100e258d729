import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vinolab.core import (Ball, Instance, StepFunction, WeightProfile, as_fraction, e_of,
                          fraction_str, make_rng, radius_for_tail, tail_fraction, torus_reduce,
                          unit_ball_volume, weight_eval, weight_mass)
from vinolab.errors import ValidationError


def test_weight_at_center_and_radius():
    b = Ball.at_origin(2, 5.0)
    assert weight_eval(b, WeightProfile(), (0.0, 0.0)) == 1.0
    assert weight_eval(b, WeightProfile(7), (3.0, 4.0)) == 2.0 ** -7


def test_weight_far_point_matches_high_precision():
    b = Ball.at_origin(2, 3.0)
    for x in [(9.0, 0.0), (0.0, -9.0)]:  # |x| = 3R exactly
        got = weight_eval(b, WeightProfile(), x)
        mpmath.mp.dps = 50
        want = float(mpmath.mpf(4) ** -200)
        assert abs(got - want) <= np.spacing(want)


def test_weight_radial_symmetry():
    b = Ball((1.0, -2.0, 0.5), 2.0)
    d = np.array([0.3, -1.1, 2.2])
    for perm in ([1, 0, 2], [2, 1, 0], [0, 2, 1]):
        assert weight_eval(b, WeightProfile(), np.array(b.center) + d) == \
            weight_eval(b, WeightProfile(), np.array(b.center) + d[perm])


def test_e_of_values():
    assert e_of(0.0) == 1
    assert abs(e_of(0.5) + 1) < 1e-15
    assert abs(e_of(1 / 3) - complex(-0.5, math.sqrt(3) / 2)) < 1e-12
    assert abs(e_of(7.25) - e_of(0.25)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_tail_beyond_four_balls_is_negligible(n):
    prof = WeightProfile().for_dim(n)
    E = prof.exponent
    mpmath.mp.dps = 60
    f = lambda u: u ** (n - 1) * (1 + u) ** -E
    # breakpoints on the decay scale 1/E keep the peaked integrand resolved
    steps = [mpmath.mpf(k) / E for k in (0, 1, 3, 10, 30, 100)]
    tail = mpmath.quad(f, [4 + 5 * t for t in steps] + [mpmath.inf])
    total = mpmath.quad(f, steps + [mpmath.inf])
    assert tail / total < 1e-30
    assert abs(tail_fraction(n, prof) - float(tail / total)) <= 1e-6 * float(tail / total)


@pytest.mark.parametrize("n,E,R", [(2, 200, 3.0), (3, 20, 1.5), (2, 6, 1.0)])
def test_weight_mass_matches_radial_quadrature(n, E, R):
    mpmath.mp.dps = 30
    rad = mpmath.quad(lambda r: r ** (n - 1) * (1 + r / R) ** -E, [0, R / 10, R, mpmath.inf])
    want = float(rad) * 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    assert weight_mass(n, R, WeightProfile(E)) == pytest.approx(want, rel=1e-10)


def test_radius_for_tail_inverts_tail_fraction():
    prof = WeightProfile().for_dim(2)
    u = radius_for_tail(2, prof, 1e-14)
    assert 0 < u < 4
    assert tail_fraction(2, prof, u) == pytest.approx(1e-14, rel=1e-6)


def test_profile_validation():
    assert WeightProfile().for_dim(3).exponent == 300
    with pytest.raises(ValidationError):
        WeightProfile(3).for_dim(3)
    with pytest.raises(ValidationError):
        Ball((0.0,), 0.0)
    with pytest.raises(ValidationError):
        Instance(1, 1, 1)


def test_ball_volume():
    assert Ball.at_origin(2, 3.0).volume == pytest.approx(9 * math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_step_function_helpers():
    g = StepFunction(np.arange(4))
    assert g.cells == 4 and g.delta == Fraction(1, 4)
    assert list(g.cell_range("1/4", "3/4")) == [1, 2]
    with pytest.raises(ValidationError):
        g.cell_range("1/3", 1)
    assert np.array_equal(g.refined(2).coeffs, np.repeat(np.arange(4), 2))
    assert np.array_equal(g.restricted([1]).coeffs, [0, 1, 0, 0])
    with pytest.raises(ValidationError):
        StepFunction([])


def test_torus_reduce_range():
    r = torus_reduce([-1e-18, 1.0, 2.5, -0.25])
    assert np.all((r >= 0) & (r < 1))
    assert r[3] == 0.75


def test_rng_is_reproducible_and_streams_differ():
    a = make_rng(5, 1, 2).random(8)
    b = make_rng(5, 1, 2).random(8)
    c = make_rng(5, 1, 3).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValidationError):
        make_rng(-1)


def test_as_fraction_parsing():
    assert as_fraction("3999/1000") == Fraction(3999, 1000)
    assert as_fraction("3.9") == Fraction(39, 10)
    assert as_fraction(np.int64(4)) == 4
    assert fraction_str(Fraction(4)) == "4/1"
    with pytest.raises(ValidationError):
        as_fraction("abc")


@settings(max_examples=200, deadline=None)
@given(st.integers(-10 ** 6, 10 ** 6), st.integers(1, 10 ** 6),
       st.integers(-10 ** 6, 10 ** 6), st.integers(1, 10 ** 6))
def test_rational_arithmetic_exact(a, b, c, d):
    assert (Fraction(a, b) + Fraction(c, d)) * (b * d) == a * d + c * b
