import math
from fractions import Fraction
from itertools import combinations, product

import numpy as np
import pytest

from vinolab.arcs import (MINOR, MajorArcLabel, classify, classify_batch, enumerate_major_arcs,
                          integer_L, major_arc_labels, minor_sup_estimate, minor_sup_fit,
                          sup_rows_csv)
from vinolab.core import make_rng
from vinolab.errors import BudgetExceeded, ValidationError
from vinolab.expsum import eval_F


def brute_label_count(L, n):
    return sum(1 for q in range(1, L + 1) for a in product(range(1, q + 1), repeat=n)
               if math.gcd(q, *a) == 1)


def test_integer_L():
    assert integer_L(16, 2) == 2
    assert integer_L(255, 2) == 3 and integer_L(256, 2) == 4
    assert integer_L(3 ** 6, 3) == 3 and integer_L(3 ** 6 - 1, 3) == 2
    assert integer_L(2 ** 60, 3) == 1024


def test_classify_examples():
    assert classify(("1/2", "1/2"), 16, 2) == MajorArcLabel(2, (1, 1))
    assert classify((Fraction(1, 2) + Fraction(1, 5), "1/2"), 16, 2) is MINOR
    assert classify((0.5 + 0.2, 0.5), 16, 2) is MINOR
    assert classify((0, 0, 0), 10 ** 6, 3) == MajorArcLabel(1, (1, 1, 1))


def test_classify_center_of_every_arc():
    for lab in major_arc_labels(256, 2):
        assert classify(lab.center(), 256, 2) == lab


def test_classify_window_is_non_strict():
    # L/N = 1/8 at N = 16; the boundary point belongs to the arc
    assert classify(("5/8", "1/2"), 16, 2) == MajorArcLabel(2, (1, 1))
    assert classify(("5/8", Fraction(1, 2) + Fraction(2, 256)), 16, 2) == MajorArcLabel(2, (1, 1))
    assert classify(("5/8", Fraction(1, 2) + Fraction(3, 256)), 16, 2) is MINOR


def test_classified_points_lie_in_their_window():
    N, n = 256, 2
    rng = make_rng(7)
    labels = major_arc_labels(N, n)
    L = integer_L(N, n)
    for lab in labels:
        for _ in range(3):
            off = [Fraction(int(rng.integers(-1000, 1001)), 1000) * Fraction(L, N ** j)
                   for j in range(1, n + 1)]
            x = tuple(c + o for c, o in zip(lab.center(), off))
            got = classify(x, N, n)
            assert got is not MINOR
            for xi, ci, j in zip(x, got.center(), range(1, n + 1)):
                d = (xi - ci) % 1
                assert min(d, 1 - d) <= Fraction(L, N ** j)


def test_label_enumeration_examples():
    labs = major_arc_labels(16, 2)
    assert labs == [MajorArcLabel(1, (1, 1)), MajorArcLabel(2, (1, 1)), MajorArcLabel(2, (1, 2)),
                    MajorArcLabel(2, (2, 1))]
    assert len(major_arc_labels(2 ** 8, 2)) == brute_label_count(4, 2)
    assert len(major_arc_labels(2 ** 9, 3)) == brute_label_count(2, 3)
    for N, n in [(15, 2), (3, 1), (100, 4)]:
        assert major_arc_labels(N, n) == [MajorArcLabel(1, (1,) * n)]


def test_label_validation_and_budget():
    with pytest.raises(ValidationError):
        MajorArcLabel(2, (2, 2))
    with pytest.raises(ValidationError):
        MajorArcLabel(2, (3, 1))
    with pytest.raises(BudgetExceeded):
        major_arc_labels(10 ** 12, 2, max_labels=100)


def test_arcs_pairwise_disjoint_at_N256():
    N, n = 256, 2
    L = integer_L(N, n)
    win = [Fraction(L, N ** j) for j in range(1, n + 1)]
    for a, b in combinations(major_arc_labels(N, n), 2):
        gaps = []
        for ca, cb, w in zip(a.center(), b.center(), win):
            d = (ca - cb) % 1
            gaps.append(min(d, 1 - d) > 2 * w)
        assert any(gaps)


def test_batch_agrees_with_scalar_classify():
    N, n = 256, 2
    labels = major_arc_labels(N, n)
    rng = make_rng(3)
    centers = np.array([[v / lab.q for v in lab.a] for lab in labels])
    x = np.vstack([rng.random((300, n)),
                   centers[rng.integers(0, len(labels), 300)] + rng.normal(0, 0.01, (300, n))])
    idx = classify_batch(x, N, labels)
    for row, k in zip(x, idx):
        lab = classify(tuple(row), N, n)
        assert (k < 0 and lab is MINOR) or labels[k] == lab


def test_monte_carlo_measure_vs_enumeration():
    en = enumerate_major_arcs(256, 2, samples=400_000, seed=0)
    assert len(en.labels) == 24
    # the arcs are disjoint here so the raw sum is the measure of the union
    assert abs(en.mc_measure - en.raw_measure) <= 3 * max(en.mc_stderr, 1e-12) + 1e-5
    sup = minor_sup_estimate(256, 2, samples=20_000, seed=1)
    rate_err = math.sqrt(en.raw_measure * (1 - en.raw_measure) / sup.drawn)
    assert abs(sup.acceptance_rate - (1 - en.raw_measure)) <= 3 * rate_err + 1.0 / sup.drawn


def test_minor_sup_bounds_and_reproducibility():
    a = minor_sup_estimate(64, 2, samples=5000, seed=4)
    b = minor_sup_estimate(64, 2, samples=5000, seed=4)
    assert a == b
    assert 0 < a.sup_estimate <= 64
    assert classify(a.argmax, 64, 2) is MINOR
    assert abs(eval_F(a.argmax, 64)) == pytest.approx(a.sup_estimate, rel=1e-12)
    # the larger run draws a superset of the same stream's points
    assert minor_sup_estimate(64, 2, samples=10_000, seed=4).sup_estimate >= a.sup_estimate
    with pytest.raises(ValidationError):
        minor_sup_estimate(64, 2, samples=10)


def test_minor_sup_fit_slope_below_one():
    fit = minor_sup_fit([64, 128, 256], 2, samples=20_000, seed=0)
    assert fit["slope"] < 0.95
    csv = sup_rows_csv(fit["rows"])
    assert csv.splitlines()[0] == "N,sup_estimate,samples,seed"
    assert len(csv.splitlines()) == 4
