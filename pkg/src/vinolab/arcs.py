"""Major/minor arc decomposition of the torus and the minor-arc sup of F(x; N).

The major arc of a label (q, a) is the set of x with |x_j - a_j/q| <= L N^{-j}
for every j, distances taken on the torus, where L = N^{1/(2n)} and q <= L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .core import as_fraction, make_rng
from .errors import BudgetExceeded, ValidationError
from .expsum import eval_F


@dataclass(frozen=True, order=True)
class MajorArcLabel:
    q: int
    a: tuple

    def __post_init__(self):
        if self.q < 1 or any(not 1 <= x <= self.q for x in self.a):
            raise ValidationError(f"invalid label q={self.q} a={self.a}")
        if math.gcd(self.q, *self.a) != 1:
            raise ValidationError(f"gcd(q, a) != 1 for q={self.q} a={self.a}")

    def center(self) -> tuple:
        return tuple(Fraction(x, self.q) for x in self.a)


MINOR = None


def integer_L(N: int, n: int) -> int:
    """floor(N^{1/(2n)}) computed exactly."""
    L = max(1, int(round(N ** (1.0 / (2 * n)))))
    while L ** (2 * n) > N:
        L -= 1
    while (L + 1) ** (2 * n) <= N:
        L += 1
    return L


def real_L(N: int, n: int) -> float:
    return float(N) ** (1.0 / (2 * n))


def major_arc_labels(N: int, n: int, *, max_labels: int = 10_000_000) -> list:
    """All labels with q <= floor(L), sorted by q then lexicographically by a."""
    if N < 1 or n < 1:
        raise ValidationError("need N >= 1 and n >= 1")
    L = integer_L(N, n)
    if sum(q ** n for q in range(1, L + 1)) > max_labels:
        raise BudgetExceeded(f"more than {max_labels} candidate labels")
    out = []
    for q in range(1, L + 1):
        for a in product(range(1, q + 1), repeat=n):
            if math.gcd(q, *a) == 1:
                out.append(MajorArcLabel(q, a))
    return out


def _torus_dist(x, c):
    d = abs(x - c) % 1
    return min(d, 1 - d)


def classify(x, N: int, n: int | None = None):
    """Label of a major arc containing ``x`` (smallest q, then smallest a), or ``MINOR``.

    Rational coordinates (Fractions, ints or strings) are checked exactly with
    the integer floor of L; floats use the real L.
    """
    exact = all(isinstance(v, (int, Fraction, str)) for v in x)
    n = len(x) if n is None else n
    if len(x) != n:
        raise ValidationError("point dimension does not match n")
    if exact:
        xs = [as_fraction(v) % 1 for v in x]
        L = integer_L(N, n)
        win = [Fraction(L, N ** j) for j in range(1, n + 1)]
    else:
        xs = [float(v) % 1.0 for v in x]
        L = real_L(N, n)
        win = [L / N ** j for j in range(1, n + 1)]
    for lab in major_arc_labels(N, n):
        c = lab.center() if exact else [v / lab.q for v in lab.a]
        if all(_torus_dist(xi, ci) <= w for xi, ci, w in zip(xs, c, win)):
            return lab
    return MINOR


def classify_batch(x: np.ndarray, N: int, labels=None) -> np.ndarray:
    """Index into ``labels`` of the first containing arc per row, or -1 for minor arcs."""
    x = np.mod(np.atleast_2d(np.asarray(x, dtype=float)), 1.0)
    n = x.shape[1]
    labels = major_arc_labels(N, n) if labels is None else labels
    win = np.array([real_L(N, n) / float(N) ** j for j in range(1, n + 1)])
    out = np.full(x.shape[0], -1, dtype=np.int64)
    for k, lab in enumerate(labels):
        d = np.abs(x - np.asarray(lab.a, dtype=float) / lab.q) % 1.0
        d = np.minimum(d, 1.0 - d)
        hit = np.all(d <= win, axis=1) & (out < 0)
        out[hit] = k
    return out


@dataclass(frozen=True)
class ArcEnumeration:
    N: int
    n: int
    labels: list
    raw_measure: float           # sum of box volumes, overlaps counted repeatedly
    mc_measure: float            # share of uniform samples landing in some arc
    mc_stderr: float
    samples: int


def enumerate_major_arcs(N: int, n: int, *, samples: int = 100_000, seed: int = 0) -> ArcEnumeration:
    """All labels, their summed measure, and a Monte Carlo measure of the union."""
    labels = major_arc_labels(N, n)
    L = real_L(N, n)
    box = math.prod(min(2 * L / N ** j, 1.0) for j in range(1, n + 1))
    rng = make_rng(seed, 2, N, n)
    hits = 0
    done = 0
    while done < samples:
        m = min(200_000, samples - done)
        hits += int(np.sum(classify_batch(rng.random((m, n)), N, labels) >= 0))
        done += m
    share = hits / samples
    err = math.sqrt(max(share * (1 - share), 0.0) / samples)
    return ArcEnumeration(N, n, labels, len(labels) * box, share, err, samples)


@dataclass(frozen=True)
class MinorSup:
    N: int
    n: int
    sup_estimate: float
    argmax: tuple
    samples: int
    drawn: int
    seed: int

    @property
    def acceptance_rate(self) -> float:
        return self.samples / self.drawn


def minor_sup_estimate(N: int, n: int, samples: int = 100_000, seed: int = 0) -> MinorSup:
    """Max of |F(x; N)| over ``samples`` uniform minor-arc points.

    Points are drawn uniformly on the torus and rejected when they fall in a
    major arc.
    """
    if samples < 1000:
        raise ValidationError("need at least 1000 samples")
    labels = major_arc_labels(N, n)
    rng = make_rng(seed, 3, N, n)
    best, arg, kept, drawn = -1.0, None, 0, 0
    while kept < samples:
        m = min(100_000, samples - kept)
        x = rng.random((m, n))
        drawn += m
        x = x[classify_batch(x, N, labels) < 0]
        if x.shape[0] == 0:
            continue
        x = x[: samples - kept]
        vals = np.abs(eval_F(x, N))
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, arg = float(vals[k]), tuple(float(v) for v in x[k])
        kept += x.shape[0]
    return MinorSup(N, n, best, arg, kept, drawn, seed)


def minor_sup_fit(N_list, n: int, samples: int = 100_000, seed: int = 0) -> dict:
    """Per-N minor-arc sup estimates and the least-squares slope of log sup vs log N."""
    rows = [minor_sup_estimate(int(N), n, samples, seed) for N in N_list]
    if len(rows) < 2:
        raise ValidationError("need at least two N values for a slope")
    lx = np.log([r.N for r in rows])
    ly = np.log([r.sup_estimate for r in rows])
    slope, intercept = np.polyfit(lx, ly, 1)
    return {"rows": rows, "slope": float(slope), "intercept": float(intercept)}


def sup_rows_csv(rows) -> str:
    lines = ["N,sup_estimate,samples,seed"]
    lines += [f"{r.N},{r.sup_estimate!r},{r.samples},{r.seed}" for r in rows]
    return "\n".join(lines) + "\n"
