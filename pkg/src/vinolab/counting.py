"""Exact counting of Vinogradov systems J_{s,n}(N).

Three routes to the same integer:

* :func:`count_naive` compares every pair of ordered s-tuples directly;
* :func:`count_mitm` builds the representation histogram r_s(v) over power-sum
  keys and returns sum r_s(v)^2;
* :func:`vinolab.expsum.torus_integral_power` averages |F|^{2s} on an exact grid.

Power sums are exact integers.  When every key fits a signed 64-bit mixed-radix
code the numpy path is used, otherwise pure Python integers.
"""

from __future__ import annotations

import heapq
import itertools
import math
import os
import struct
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Instance, as_fraction
from .errors import BudgetExceeded, ValidationError

INT64_LIMIT = 2 ** 62


@dataclass(frozen=True)
class Budget:
    """Hard guards for enumeration.  Exceeding any of them raises ``BudgetExceeded``."""

    max_tuples: int = 10 ** 9
    max_bytes: int = 2 * 10 ** 9

    def check_tuples(self, count: int, what: str):
        if count > self.max_tuples:
            raise BudgetExceeded(f"{what}: {count} tuples > budget {self.max_tuples}")

    def check_bytes(self, count: int, what: str):
        if count > self.max_bytes:
            raise BudgetExceeded(f"{what}: {count} bytes > budget {self.max_bytes}")


DEFAULT_BUDGET = Budget()


# --------------------------------------------------------------------------
# key encoding

@dataclass(frozen=True)
class KeyCodec:
    """Mixed-radix code for power-sum vectors; v_1 is the most significant digit,
    so numeric code order equals lexicographic key order."""

    lo: tuple
    radix: tuple

    @classmethod
    def for_range(cls, n: int, s: int, values) -> "KeyCodec":
        lo, radix = [], []
        for i in range(1, n + 1):
            powers = [v ** i for v in values]
            lo.append(s * min(powers))
            radix.append(s * max(powers) - s * min(powers) + 1)
        return cls(tuple(lo), tuple(radix))

    @property
    def size(self) -> int:
        return math.prod(self.radix)

    @property
    def fits_int64(self) -> bool:
        return self.size < INT64_LIMIT

    @property
    def strides(self) -> tuple:
        out, acc = [], 1
        for r in reversed(self.radix):
            out.append(acc)
            acc *= r
        return tuple(reversed(out))

    def encode(self, key) -> int:
        return sum((v - l) * st for v, l, st in zip(key, self.lo, self.strides))

    def decode(self, code: int) -> tuple:
        out = []
        for l, st in zip(self.lo, self.strides):
            d, code = divmod(int(code), st)
            out.append(d + l)
        return tuple(out)


def _values(N: int, offset: int) -> list:
    return list(range(offset + 1, offset + N + 1))


# --------------------------------------------------------------------------
# brute force

def count_naive(inst: Instance, budget: Budget = DEFAULT_BUDGET, offset: int = 0) -> int:
    """Number of 2s-tuples in {offset+1, ..., offset+N}^{2s} solving all n equations.

    Every ordered left s-tuple is compared coordinate by coordinate against
    every ordered right s-tuple; no keying or histogramming is involved.
    """
    n, s, N = inst.n, inst.s, inst.N
    budget.check_tuples(N ** (2 * s), "count_naive")
    values = _values(N, offset)
    codec = KeyCodec.for_range(n, s, values)
    if codec.fits_int64:
        x = np.array(values, dtype=np.int64)
        pw = np.stack([x ** i for i in range(1, n + 1)], axis=1)  # (N, n)
        keys = np.zeros((1, n), dtype=np.int64)
        for _ in range(s):
            keys = (keys[:, None, :] + pw[None, :, :]).reshape(-1, n)
        total = 0
        m = keys.shape[0]
        chunk = max(1, 4_000_000 // max(1, m * n))
        for start in range(0, m, chunk):
            left = keys[start:start + chunk]
            eq = np.ones((left.shape[0], m), dtype=bool)
            for i in range(n):
                eq &= left[:, i, None] == keys[None, :, i]
            total += int(eq.sum())
        return total
    keys = [tuple(sum(x ** i for x in t) for i in range(1, n + 1))
            for t in itertools.product(values, repeat=s)]
    return sum(1 for a in keys for b in keys if a == b)


# --------------------------------------------------------------------------
# representation histogram

@dataclass(eq=False)
class RepresentationHistogram:
    """Multiplicity of each power-sum key over ordered s-tuples.

    Stored as sorted codes plus counts (numpy path) or as a plain dict keyed by
    the power-sum tuple (big-integer path).
    """

    inst: Instance
    offset: int
    codec: KeyCodec
    codes: np.ndarray | None = field(default=None, repr=False)
    counts: np.ndarray | None = field(default=None, repr=False)
    table: dict | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.table) if self.table is not None else int(self.codes.size)

    def items(self):
        """Yield ``(PowerSumKey, multiplicity)`` in increasing key order."""
        if self.table is not None:
            for k in sorted(self.table):
                yield k, self.table[k]
        else:
            for c, m in zip(self.codes.tolist(), self.counts.tolist()):
                yield self.codec.decode(c), m

    def to_dict(self) -> dict:
        return dict(self.items())

    def mass(self) -> int:
        if self.table is not None:
            return sum(self.table.values())
        return int(self.counts.sum(dtype=np.int64))

    def energy(self) -> int:
        """Sum of squared multiplicities, i.e. J_{s,n}(N)."""
        if self.table is not None:
            return sum(m * m for m in self.table.values())
        c = self.counts
        if c.size == 0:
            return 0
        if int(c.max()) * self.mass() < INT64_LIMIT:
            return int(np.dot(c, c))
        return sum(m * m for m in c.tolist())


def _multisets(N: int, s: int, lead: int) -> np.ndarray:
    """Nondecreasing index tuples of length s over range(N) starting with ``lead``."""
    rows = np.array([[lead]], dtype=np.int32)
    for _ in range(s - 1):
        last = rows[:, -1]
        reps = N - last
        base = np.repeat(rows, reps, axis=0)
        # for each row append last, last+1, ..., N-1
        starts = np.repeat(last, reps)
        offs = np.arange(base.shape[0]) - np.repeat(np.cumsum(reps) - reps, reps)
        rows = np.concatenate([base, (starts + offs)[:, None].astype(np.int32)], axis=1)
    return rows


def _multinomial_weights(rows: np.ndarray) -> np.ndarray:
    """s! / prod(m_k!) for each sorted row (number of distinct orderings)."""
    s = rows.shape[1]
    run = np.ones(rows.shape[0], dtype=np.int64)
    denom = np.ones(rows.shape[0], dtype=np.int64)
    for j in range(1, s):
        same = rows[:, j] == rows[:, j - 1]
        run = np.where(same, run + 1, 1)
        denom *= run
    return math.factorial(s) // denom


def _reduce_sorted(codes: np.ndarray, weights: np.ndarray):
    order = np.argsort(codes, kind="stable")
    codes, weights = codes[order], weights[order]
    if codes.size == 0:
        return codes, weights
    starts = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1]])
    return codes[starts], np.add.reduceat(weights, starts)


def _partial_histogram(args):
    """Sorted (codes, counts) for all multisets whose smallest element is each lead."""
    n, s, N, offset, leads, codec = args
    x = np.array(_values(N, offset), dtype=np.int64)
    strides = np.array(codec.strides, dtype=np.int64)
    lo = np.array(codec.lo, dtype=np.int64)
    parts_c, parts_w = [], []
    for lead in leads:
        rows = _multisets(N, s, lead)
        w = _multinomial_weights(rows)
        vals = x[rows]
        code = np.zeros(rows.shape[0], dtype=np.int64)
        pw = np.ones_like(vals)
        for i in range(n):
            pw = pw * vals
            code += (pw.sum(axis=1) - lo[i]) * strides[i]
        parts_c.append(code)
        parts_w.append(w)
    return _reduce_sorted(np.concatenate(parts_c), np.concatenate(parts_w))


def _merge_partials(partials):
    codes = np.concatenate([p[0] for p in partials])
    counts = np.concatenate([p[1] for p in partials])
    return _reduce_sorted(codes, counts)


def _lead_groups(N: int, workers: int) -> list:
    workers = max(1, workers)
    return [list(range(k, N, workers)) for k in range(min(workers, N))]


def representation_histogram(inst: Instance, budget: Budget = DEFAULT_BUDGET, *,
                             method: str = "sort", workers: int = 1,
                             offset: int = 0) -> RepresentationHistogram:
    """Histogram of power-sum keys over the N^s ordered s-tuples.

    Enumeration runs over multisets (sorted tuples) weighted by their number of
    orderings and is partitioned by the smallest element.  ``method`` is
    ``"sort"`` (sort-merge on int64 codes) or ``"hash"`` (Counter).  ``workers``
    > 1 spreads the partitions over processes; the result does not depend on it.
    """
    n, s, N = inst.n, inst.s, inst.N
    n_multisets = math.comb(N + s - 1, s)
    budget.check_tuples(n_multisets, "representation_histogram")
    values = _values(N, offset)
    codec = KeyCodec.for_range(n, s, values)
    if not codec.fits_int64:
        return _histogram_bigint(inst, offset, codec, budget)
    budget.check_bytes(n_multisets * (s * 4 + 24), "representation_histogram")
    groups = _lead_groups(N, workers)
    jobs = [(n, s, N, offset, g, codec) for g in groups]
    if method == "sort":
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                partials = list(ex.map(_partial_histogram, jobs))
        else:
            partials = [_partial_histogram(j) for j in jobs]
        codes, counts = _merge_partials(partials)
        return RepresentationHistogram(inst, offset, codec, codes=codes, counts=counts)
    if method == "hash":
        table = Counter()
        for job in jobs:
            c, w = _partial_histogram(job)
            for code, m in zip(c.tolist(), w.tolist()):
                table[code] += m
        keys = np.array(sorted(table), dtype=np.int64)
        counts = np.array([table[k] for k in keys.tolist()], dtype=np.int64)
        return RepresentationHistogram(inst, offset, codec, codes=keys, counts=counts)
    raise ValidationError(f"unknown histogram method {method!r}")


def _histogram_bigint(inst, offset, codec, budget) -> RepresentationHistogram:
    n, s, N = inst.n, inst.s, inst.N
    budget.check_bytes(math.comb(N + s - 1, s) * (n * 64 + 64), "representation_histogram")
    values = _values(N, offset)
    table = Counter()
    fact = math.factorial(s)
    for combo in itertools.combinations_with_replacement(values, s):
        key = tuple(sum(x ** i for x in combo) for i in range(1, n + 1))
        table[key] += fact // math.prod(math.factorial(m) for m in Counter(combo).values())
    return RepresentationHistogram(inst, offset, codec, table=dict(table))


def count_mitm(inst: Instance, budget: Budget = DEFAULT_BUDGET, *, method: str = "sort",
               workers: int = 1, offset: int = 0, spill_dir: str | None = None) -> int:
    """J_{s,n}(N) as the sum of squared representation multiplicities.

    With ``spill_dir`` the per-partition histograms are written to sorted spill
    files and combined by a streaming k-way merge.
    """
    if spill_dir is not None:
        return count_mitm_spilled(inst, spill_dir, budget, workers=workers, offset=offset)
    return representation_histogram(inst, budget, method=method, workers=workers,
                                    offset=offset).energy()


# --------------------------------------------------------------------------
# spill files
#
# header:  8s magic b"VLHIST1\0" | <I n | <I s | <I N | <q offset | <I key_width
#          | <Q record_count
# record:  n little-endian signed integers of key_width bytes (v_1..v_n)
#          followed by <Q multiplicity; records sorted by key (lexicographic).

SPILL_MAGIC = b"VLHIST1\x00"
_HEADER = struct.Struct("<8sIIIqIQ")


def _key_width(codec: KeyCodec) -> int:
    hi = max(max(abs(l), abs(l + r - 1)) for l, r in zip(codec.lo, codec.radix))
    return max(1, (hi.bit_length() + 8) // 8)


def write_spill(path: str, inst: Instance, offset: int, codec: KeyCodec, items) -> int:
    """Write ``(key, multiplicity)`` pairs (already sorted) to ``path``; returns count."""
    width = _key_width(codec)
    tmp = path + ".tmp"
    count = 0
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(SPILL_MAGIC, inst.n, inst.s, inst.N, offset, width, 0))
        for key, m in items:
            fh.write(b"".join(int(v).to_bytes(width, "little", signed=True) for v in key))
            fh.write(struct.pack("<Q", int(m)))
            count += 1
        fh.seek(0)
        fh.write(_HEADER.pack(SPILL_MAGIC, inst.n, inst.s, inst.N, offset, width, count))
    os.replace(tmp, path)
    return count


def read_spill_header(path: str) -> dict:
    with open(path, "rb") as fh:
        magic, n, s, N, offset, width, count = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != SPILL_MAGIC:
        raise ValidationError(f"{path}: not a histogram spill file")
    return dict(n=n, s=s, N=N, offset=offset, key_width=width, records=count)


def iter_spill(path: str):
    """Yield ``(key, multiplicity)`` records from a spill file in stored order."""
    hdr = read_spill_header(path)
    n, width = hdr["n"], hdr["key_width"]
    rec = n * width + 8
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for _ in range(hdr["records"]):
            buf = fh.read(rec)
            key = tuple(int.from_bytes(buf[i * width:(i + 1) * width], "little", signed=True)
                        for i in range(n))
            yield key, struct.unpack("<Q", buf[n * width:])[0]


def count_mitm_spilled(inst: Instance, spill_dir: str, budget: Budget = DEFAULT_BUDGET, *,
                       workers: int = 4, offset: int = 0) -> int:
    """Meet-in-the-middle count through per-partition spill files."""
    n, s, N = inst.n, inst.s, inst.N
    budget.check_tuples(math.comb(N + s - 1, s), "count_mitm_spilled")
    codec = KeyCodec.for_range(n, s, _values(N, offset))
    if not codec.fits_int64:
        raise ValidationError("spill path needs keys that fit 64-bit codes")
    os.makedirs(spill_dir, exist_ok=True)
    paths = []
    for k, group in enumerate(_lead_groups(N, workers)):
        codes, counts = _partial_histogram((n, s, N, offset, group, codec))
        path = os.path.join(spill_dir, f"hist_n{n}_s{s}_N{N}_part{k}.bin")
        write_spill(path, inst, offset, codec,
                    ((codec.decode(c), m) for c, m in zip(codes.tolist(), counts.tolist())))
        paths.append(path)
    total, current, acc = 0, None, 0
    for key, m in heapq.merge(*(iter_spill(p) for p in paths)):
        if key != current:
            total += acc * acc
            current, acc = key, 0
        acc += m
    return total + acc * acc


# --------------------------------------------------------------------------
# real separated points

@dataclass(frozen=True, eq=False)
class SeparatedPointSet:
    """Points X_1..X_N with i-1 < X_i <= i, held as exact rationals."""

    points: tuple

    def __post_init__(self):
        pts = tuple(as_fraction(p) for p in self.points)
        for i, x in enumerate(pts, start=1):
            if not (i - 1 < x <= i):
                raise ValidationError(f"X_{i} = {x} outside ({i - 1}, {i}]")
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return len(self.points)

    @classmethod
    def integers(cls, N: int) -> "SeparatedPointSet":
        return cls(tuple(range(1, N + 1)))


def count_real(points: SeparatedPointSet, s: int, n: int,
               budget: Budget = DEFAULT_BUDGET) -> int:
    """Number of 2s-tuples from S_X with |Z_i| <= N^(i-n) for every i <= n.

    Keys are bucketed on a grid of cell width N^(i-n) per coordinate (exact
    rational floors), the 3^n neighbouring cells are scanned, and candidates are
    filtered with exact rational comparisons.  Boundary ties count.
    """
    if n < 1 or s < 1:
        raise ValidationError("need n >= 1 and s >= 1")
    N = points.N
    budget.check_tuples(N ** s, "count_real")
    tol = [Fraction(N) ** (i - n) for i in range(1, n + 1)]
    pw = [[x ** i for i in range(1, n + 1)] for x in points.points]
    keys = Counter()
    for t in itertools.product(range(N), repeat=s):
        keys[tuple(sum(pw[k][i] for k in t) for i in range(n))] += 1
    buckets: dict = {}
    for key, m in keys.items():
        cell = tuple(math.floor(v / h) for v, h in zip(key, tol))
        buckets.setdefault(cell, []).append((key, m))
    total = 0
    shifts = list(itertools.product((-1, 0, 1), repeat=n))
    for cell, members in buckets.items():
        for d in shifts:
            other = buckets.get(tuple(c + e for c, e in zip(cell, d)))
            if not other:
                continue
            for ka, ma in members:
                for kb, mb in other:
                    if all(abs(a - b) <= h for a, b, h in zip(ka, kb, tol)):
                        total += ma * mb
    return total


def count_real_bruteforce(points: SeparatedPointSet, s: int, n: int) -> int:
    """Direct filter over all 2s-tuples; oracle for :func:`count_real`."""
    N = points.N
    tol = [Fraction(N) ** (i - n) for i in range(1, n + 1)]
    X = points.points
    total = 0
    for t in itertools.product(X, repeat=2 * s):
        if all(abs(sum(x ** i for x in t[:s]) - sum(x ** i for x in t[s:])) <= tol[i - 1]
               for i in range(1, n + 1)):
            total += 1
    return total


# --------------------------------------------------------------------------
# growth

def growth_fit(n: int, s: int, N_list, *, algo: str = "mitm",
               budget: Budget = DEFAULT_BUDGET, workers: int = 1) -> dict:
    """Least-squares slope of log J_{s,n}(N) against log N.

    Returns the slope, intercept, per-point residuals, the raw counts and the
    two reference exponents s and 2s - n(n+1)/2.
    """
    N_list = [int(v) for v in N_list]
    if len(N_list) < 3 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValidationError("growth_fit needs at least three increasing N values")
    counts = []
    for N in N_list:
        inst = Instance(n, s, N)
        if algo == "mitm":
            counts.append(count_mitm(inst, budget, workers=workers))
        elif algo == "naive":
            counts.append(count_naive(inst, budget))
        else:
            raise ValidationError(f"unknown algorithm {algo!r}")
    lx = np.log(np.array(N_list, dtype=float))
    ly = np.log(np.array([float(c) for c in counts]))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return {
        "n": n, "s": s, "N": N_list, "J": counts,
        "slope": float(slope), "intercept": float(intercept),
        "residuals": [float(r) for r in resid],
        "reference_slopes": [s, 2 * s - n * (n + 1) / 2],
    }
