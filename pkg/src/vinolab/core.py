"""Shared domain types, the ball weight, e(z), and deterministic seeding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import special

from .errors import ValidationError

TWO_PI = 2.0 * math.pi


def as_fraction(value) -> Fraction:
    """Parse ints, Fractions, and strings such as ``"3999/1000"`` or ``"3.9"``.

    Floats are converted exactly (binary value), so prefer strings.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a rational number: {value!r}") from exc
    raise ValidationError(f"cannot interpret {value!r} as a rational")


def fraction_str(q: Fraction) -> str:
    """Serialize as ``num/den`` (always with a denominator)."""
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Instance:
    """Vinogradov system parameters: degree ``n``, multiplicity ``s``, range ``N``."""

    n: int
    s: int
    N: int

    def __post_init__(self):
        if self.n < 2 or self.s < 1 or self.N < 1:
            raise ValidationError(f"invalid instance n={self.n} s={self.s} N={self.N}")

    @property
    def critical_s(self) -> Fraction:
        return Fraction(self.n * (self.n + 1), 2)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius ** self.dim

    @classmethod
    def at_origin(cls, n: int, radius: float) -> "Ball":
        return cls((0.0,) * n, radius)


@dataclass(frozen=True)
class WeightProfile:
    """Decay exponent and truncation factor for ``(1 + |x-c|/R)^(-exponent)``.

    ``exponent=None`` means the default ``100 n``; resolve with :meth:`for_dim`.
    """

    exponent: float | None = None
    truncation_factor: float = 4.0

    def for_dim(self, n: int) -> "WeightProfile":
        exponent = 100 * n if self.exponent is None else self.exponent
        if exponent < n + 1:
            raise ValidationError(f"weight exponent {exponent} < n+1 = {n + 1}")
        if not self.truncation_factor > 0:
            raise ValidationError("truncation factor must be positive")
        return WeightProfile(exponent, self.truncation_factor)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Complex function on [0, 1], constant on each cell ``[j/m, (j+1)/m)``."""

    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if c.size == 0:
            raise ValidationError("step function needs at least one cell")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def cells(self) -> int:
        return self.coeffs.size

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.cells)

    def cell_range(self, a, b) -> range:
        """Indices of the cells making up ``[a, b]``; endpoints must be grid aligned."""
        a, b = as_fraction(a), as_fraction(b)
        lo, hi = a * self.cells, b * self.cells
        if lo.denominator != 1 or hi.denominator != 1 or not 0 <= lo <= hi <= self.cells:
            raise ValidationError(f"[{a}, {b}] is not a union of 1/{self.cells} cells")
        return range(int(lo), int(hi))

    def scaled(self, c: complex) -> "StepFunction":
        return StepFunction(self.coeffs * c)

    def refined(self, factor: int) -> "StepFunction":
        """Same function on a grid ``factor`` times finer."""
        return StepFunction(np.repeat(self.coeffs, factor))

    def restricted(self, cells) -> "StepFunction":
        out = np.zeros_like(self.coeffs)
        idx = list(cells)
        out[idx] = self.coeffs[idx]
        return StepFunction(out)

    @classmethod
    def constant(cls, cells: int, value: complex = 1.0) -> "StepFunction":
        return cls(np.full(cells, value, dtype=complex))

    @classmethod
    def indicator(cls, cells: int, j: int, value: complex = 1.0) -> "StepFunction":
        c = np.zeros(cells, dtype=complex)
        c[j] = value
        return cls(c)

    @classmethod
    def random_unimodular(cls, cells: int, rng: np.random.Generator) -> "StepFunction":
        return cls(np.exp(TWO_PI * 1j * rng.random(cells)))


def torus_reduce(x) -> np.ndarray:
    """Reduce coordinates into [0, 1)."""
    r = np.mod(np.asarray(x, dtype=float), 1.0)
    # mod can return exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


def e_of(z):
    """``exp(2 pi i z)``, reducing ``z`` mod 1 first so that e(z+1) == e(z)."""
    z = np.asarray(z, dtype=float)
    out = np.exp(TWO_PI * 1j * (z - np.round(z)))
    return out if out.ndim else complex(out)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def unit_sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def log_weight(ball: Ball, profile: WeightProfile, x) -> np.ndarray:
    """Natural log of the ball weight at the rows of ``x``."""
    prof = profile.for_dim(ball.dim)
    d = np.asarray(x, dtype=float) - np.asarray(ball.center)
    r = np.sqrt(np.sum(d * d, axis=-1))
    return -prof.exponent * np.log1p(r / ball.radius)


def weight_eval(ball: Ball, profile: WeightProfile, x):
    """``(1 + |x - c|/R)^(-exponent)`` evaluated at a point or rows of points."""
    prof = profile.for_dim(ball.dim)
    d = np.asarray(x, dtype=float) - np.asarray(ball.center)
    r = np.sqrt(np.sum(d * d, axis=-1))
    w = (1.0 + r / ball.radius) ** (-float(prof.exponent))
    return w if np.ndim(w) else float(w)


def weight_radial(u, exponent: float):
    """Weight as a function of ``u = |x - c| / R``."""
    return (1.0 + np.asarray(u, dtype=float)) ** (-float(exponent))


def weight_mass(n: int, radius: float, profile: WeightProfile, inner: float = 0.0) -> float:
    """Integral of the weight over ``|x - c| >= inner * R`` in R^n.

    Uses the substitution v = u/(1+u), which turns the radial integral into
    an incomplete beta function B(n, E-n).
    """
    prof = profile.for_dim(n)
    E = float(prof.exponent)
    total = unit_sphere_area(n) * radius ** n * math.exp(special.betaln(n, E - n))
    if inner <= 0:
        return total
    return total * tail_fraction(n, prof, inner)


def tail_fraction(n: int, profile: WeightProfile, factor: float | None = None) -> float:
    """Share of the weight's mass lying outside ``factor * B``."""
    prof = profile.for_dim(n)
    f = prof.truncation_factor if factor is None else factor
    # regularized I_{1/(1+f)}(E-n, n) is the upper tail of Beta(n, E-n)
    return float(special.betainc(prof.exponent - n, n, 1.0 / (1.0 + f)))


def radius_for_tail(n: int, profile: WeightProfile, tol: float) -> float:
    """Smallest ``u = r/R`` (capped at the truncation factor) with tail share <= tol."""
    prof = profile.for_dim(n)
    if tail_fraction(n, prof) > tol:
        return prof.truncation_factor
    v = float(special.betaincinv(prof.exponent - n, n, tol))
    u = 1.0 / v - 1.0
    return min(max(u, 0.0), prof.truncation_factor)


def seed_sequence(seed: int, *stream: int) -> np.random.SeedSequence:
    if not 0 <= int(seed) < 2 ** 64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for substream ``stream`` of ``seed``; identical inputs give identical draws."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *stream)))
