import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from vinolab.appendix import (empirical_threshold, gauss_solve, iterate_coefficients,
                              omega1_affine, omega1_closed_form_n3, pole_set, residuals,
                              solve_full, solve_reduced, solve_system, verify_threshold)
from vinolab.errors import DimensionTooSmall, SingularSystem


def test_critical_point_solution():
    sol = solve_system(3, 4, 0)
    assert sol.omega == (1, Fraction(1, 2), 0)
    assert sol.eta == (2, 1)
    for n in range(3, 9):
        sol = solve_system(n, n + 1, 0)
        for j in range(1, n):
            assert sol.eta[j - 1] == 2 * sol.omega[j - 1] == Fraction(2 * (n - j), n - 1)


def test_one_parameter_family():
    D = Fraction(29, 5)
    sol = solve_system(5, D, (D - 6) / (D - 2))
    assert all(sol.eta[j - 1] == 2 * (D - j - 1) / (D - 2) for j in range(1, 5))
    for n in range(3, 9):
        D = n + 1 - Fraction(3, 17)
        sol = solve_system(n, D, (D - n - 1) / (D - 2))
        assert all(sol.eta[j - 1] == 2 * (D - j - 1) / (D - 2) for j in range(1, n))


def test_n3_matches_closed_form():
    D = Fraction(399, 100)
    assert solve_system(3, D, 0).omega1 == omega1_closed_form_n3(3 * D)
    for D in (Fraction(7, 2), Fraction(37, 10), Fraction(4)):
        assert solve_system(3, D, 0).omega1 == omega1_closed_form_n3(3 * D)


def test_affine_examples():
    A, B = omega1_affine(3, 4)
    assert A == 1 and B > 0
    assert omega1_affine(4, 5)[0] == 1


@pytest.mark.parametrize("n", range(3, 9))
def test_affine_identity_on_family(n):
    for D in (n + Fraction(1, 3), n + Fraction(7, 8), n + 1, Fraction(2 * n + 3, 2) + 5):
        A, B = omega1_affine(n, D)
        assert A + B * (D - n - 1) / (D - 2) == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 10), st.fractions(min_value=Fraction(3, 2), max_value=20, max_denominator=50),
       st.fractions(min_value=-5, max_value=5, max_denominator=50))
def test_two_paths_agree_and_residuals_vanish(n, D, th):
    if D in pole_set(n):
        with pytest.raises(SingularSystem):
            solve_system(n, D, th)
        return
    red, full = solve_reduced(n, D, th), solve_full(n, D, th)
    assert red == full
    assert all(r == 0 for r in residuals(red))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.fractions(min_value=Fraction(7, 2), max_value=12, max_denominator=40),
       st.lists(st.fractions(min_value=-9, max_value=9, max_denominator=30), min_size=3,
                max_size=3, unique=True))
def test_omega1_collinear_in_theta(n, D, thetas):
    if D in pole_set(n):
        return
    pts = [(t, solve_system(n, D, t).omega1) for t in thetas]
    (x0, y0), (x1, y1), (x2, y2) = pts
    assert (y1 - y0) * (x2 - x0) == (y2 - y0) * (x1 - x0)


@pytest.mark.parametrize("n", range(3, 9))
def test_B_positive_near_critical_point(n):
    for k in range(50):
        D = n + 1 - Fraction(k, 490)
        assert omega1_affine(n, D)[1] > 0


@pytest.mark.parametrize("n", range(3, 9))
def test_threshold_just_below_critical_point(n):
    ok, margin = verify_threshold(n, n + 1 - Fraction(1, 1000))
    assert ok and margin > 0
    ok, margin = verify_threshold(n, n + 1)
    assert not ok and margin == 0


@pytest.mark.parametrize("n", [3, 5, 8])
def test_margin_shrinks_to_zero(n):
    margins = [verify_threshold(n, n + 1 - Fraction(1, 10 ** k))[1] for k in range(1, 9)]
    assert all(a > b > 0 for a, b in zip(margins, margins[1:]))
    assert margins[-1] < 1e-6


def test_example_n3():
    assert verify_threshold(3, 4 - Fraction(1, 1000)) == (True, Fraction(999, 1996001))


def test_errors():
    with pytest.raises(DimensionTooSmall):
        solve_system(2, 3, 0)
    for j in (1, 2, 3):
        with pytest.raises(SingularSystem):
            solve_system(4, j, 0)
    with pytest.raises(SingularSystem):
        gauss_solve([[1, 2], [2, 4]], [1, 1])


def test_gauss_solve_small():
    assert gauss_solve([[2, 1], [1, 3]], [3, 5]) == [Fraction(4, 5), Fraction(7, 5)]


@pytest.mark.parametrize("n", [3, 4, 5])
def test_iterated_coefficients_converge(n):
    D = n + 1 - Fraction(1, 20)
    A, B = omega1_affine(n, D)
    seq = iterate_coefficients(n, D, 4000)
    assert abs(seq[-1][0] - float(A)) < 1e-8
    assert abs(seq[-1][1] - float(B)) < 1e-8
    # each round only resolves more of the nonnegative expansion
    assert all(a[0] <= b[0] + 1e-15 for a, b in zip(seq, seq[1:]))


def test_empirical_threshold_n3_is_the_pole():
    lo, hi = empirical_threshold(3)
    assert lo < 2 + math.sqrt(2) < hi
    assert hi - lo < 1e-9
