"""Exponential sums, the extension operator, weighted norms and torus moments.

Weighted L^p norms are computed with the trapezoid rule on a tensor grid.  The
integrand |E_J g|^p w_B is (for even p) band limited up to the slowly varying
weight, so a grid finer than the Nyquist spacing of |f|^p integrates it to
spectral accuracy.  The grid covers the ball of radius u_cut * R where the
remaining weight mass drops below ``QuadratureConfig.tail_tol``; everything
outside, including the part beyond truncation_factor * R, is charged to
``NormResult.truncation_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import (Ball, Instance, StepFunction, WeightProfile, e_of, make_rng,
                   radius_for_tail, weight_mass)
from .errors import BudgetExceeded, NonIntegerResult, QuadratureBudgetExceeded, ValidationError


@dataclass(frozen=True)
class QuadratureConfig:
    panels_per_oscillation: float = 8.0
    nodes_per_panel: int = 8
    mc_samples: int = 100_000
    seed: int = 0
    max_panels: int = 2_000_000
    grid_oversample: float = 1.5
    max_grid_points: int = 120_000_000
    tail_tol: float = 1e-14

    def __post_init__(self):
        if not (self.panels_per_oscillation > 0 and self.nodes_per_panel > 0
                and self.mc_samples > 0 and self.grid_oversample > 0):
            raise ValidationError("quadrature configuration values must be positive")

    def doubled(self) -> "QuadratureConfig":
        """Twice the panel density and twice the spatial sampling rate."""
        return replace(self, panels_per_oscillation=2 * self.panels_per_oscillation,
                       grid_oversample=2 * self.grid_oversample)


@dataclass(frozen=True)
class NormResult:
    value: float
    truncation_bound: float
    quadrature_estimate_error: float


# --------------------------------------------------------------------------
# exponential sum F(x; N)

def eval_F(x, N: int, n: int | None = None):
    """F(x; N) = sum_{j<=N} e(x_1 j + ... + x_n j^n) at a point or rows of points.

    The phase is evaluated by Horner's rule with reduction mod 1 after every
    step, keeping the accumulated phase in [0, 1).
    """
    if N < 1:
        raise ValidationError("N must be >= 1")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if n is not None and x.shape[1] != n:
        raise ValidationError(f"point has {x.shape[1]} coordinates, expected {n}")
    j = np.arange(1, N + 1, dtype=float)
    out = np.empty(x.shape[0], dtype=complex)
    step = max(1, 2_000_000 // N)
    for a in range(0, x.shape[0], step):
        xb = x[a:a + step]
        phase = np.broadcast_to(xb[:, -1:], (xb.shape[0], N)).copy()
        for i in range(xb.shape[1] - 2, -1, -1):
            phase = np.mod(phase * j + xb[:, i:i + 1], 1.0)
        phase = np.mod(phase * j, 1.0)
        out[a:a + step] = np.exp(2j * np.pi * phase).sum(axis=1)
    return complex(out[0]) if single else out


# --------------------------------------------------------------------------
# extension operator

@lru_cache(maxsize=64)
def _gauss_legendre(m: int):
    return np.polynomial.legendre.leggauss(m)


def panel_count(cell_length: float, phase_speed: float, cfg: QuadratureConfig) -> int:
    """Panels for one cell: ``panels_per_oscillation`` times the oscillation count
    ``|cell| * sum_i i |x_i|`` (at least one panel)."""
    return max(1, math.ceil(cfg.panels_per_oscillation * cell_length * phase_speed))


def cell_rule(a: float, b: float, panels: int, cfg: QuadratureConfig):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    xg, wg = _gauss_legendre(cfg.nodes_per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    return t, w


def phase_speed(x_abs_max) -> float:
    """Upper bound sum_i i |x_i| on |d/dt (x . (t, ..., t^n))| for t in [0, 1]."""
    return float(sum((i + 1) * abs(v) for i, v in enumerate(x_abs_max)))


def _piece_rule(g: StepFunction, cells, speed: float, cfg: QuadratureConfig):
    ts, cs = [], []
    h = 1.0 / g.cells
    total = 0
    for c in cells:
        k = panel_count(h, speed, cfg)
        total += k
        if total > cfg.max_panels:
            raise QuadratureBudgetExceeded(f"{total} panels > max_panels {cfg.max_panels}")
        t, w = cell_rule(c * h, (c + 1) * h, k, cfg)
        ts.append(t)
        cs.append(w * g.coeffs[c])
    if not ts:
        return np.zeros(0), np.zeros(0, dtype=complex)
    return np.concatenate(ts), np.concatenate(cs)


def eval_extension(g: StepFunction, J, x, cfg: QuadratureConfig = QuadratureConfig()):
    """E_J g(x) = int_J g(t) e(t x_1 + ... + t^n x_n) dt at a point or rows of points.

    ``J`` is a pair ``(a, b)`` of grid-aligned endpoints.
    """
    cells = g.cell_range(*J)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[1]
    t, c = _piece_rule(g, cells, phase_speed(np.abs(x).max(axis=0)), cfg)
    if t.size == 0:
        out = np.zeros(x.shape[0], dtype=complex)
        return complex(out[0]) if single else out
    tp = np.stack([t ** (i + 1) for i in range(n)])  # (n, K)
    out = np.empty(x.shape[0], dtype=complex)
    step = max(1, 4_000_000 // t.size)
    for a in range(0, x.shape[0], step):
        out[a:a + step] = e_of(x[a:a + step] @ tp) @ c
    return complex(out[0]) if single else out


class ExtensionFamily:
    """E_J g for a list of disjoint pieces J (each a range of cells), evaluated
    together on tensor grids.  The union of the pieces is their sum."""

    def __init__(self, g: StepFunction, pieces, n: int, cfg: QuadratureConfig = QuadratureConfig()):
        if n < 2:
            raise ValidationError("extension operator needs n >= 2")
        self.g, self.n, self.cfg = g, n, cfg
        self.pieces = [list(p) for p in pieces]
        seen = [c for p in self.pieces for c in p]
        if len(seen) != len(set(seen)):
            raise ValidationError("pieces overlap")

    @property
    def bandwidth(self) -> np.ndarray:
        """Width of the frequency box per coordinate for the union of pieces."""
        cells = [c for p in self.pieces for c in p]
        if not cells:
            return np.zeros(self.n)
        a, b = min(cells) / self.g.cells, (max(cells) + 1) / self.g.cells
        return np.array([b ** (i + 1) - a ** (i + 1) for i in range(self.n)])

    @property
    def sup_bound(self) -> float:
        """|J| max|g| style bound valid for the union and for every piece."""
        h = 1.0 / self.g.cells
        return h * float(sum(abs(self.g.coeffs[c]) for p in self.pieces for c in p))

    def rules(self, axes):
        speed = phase_speed([np.abs(ax).max() for ax in axes])
        return [_piece_rule(self.g, p, speed, self.cfg) for p in self.pieces]

    def evaluate_block(self, rules, factors, rows: slice):
        """Piece values on the block ``rows`` of the first axis (all other axes full).

        ``factors[i]`` holds e(t^{i+1} x_i) per piece, shape (len(axis_i), K_piece).
        """
        out = []
        for (t, c), fac in zip(rules, factors):
            if t.size == 0:
                shape = (fac[0][rows].shape[0],) + tuple(f.shape[0] for f in fac[1:])
                out.append(np.zeros(shape, dtype=complex))
                continue
            a1 = fac[0][rows] * c
            if self.n == 2:
                out.append(a1 @ fac[1].T)
                continue
            tail_shape = tuple(f.shape[0] for f in fac[2:])
            res = np.empty((a1.shape[0], fac[1].shape[0]) + tail_shape, dtype=complex)
            for idx in np.ndindex(*tail_shape):
                m = np.ones(t.size, dtype=complex)
                for k, ii in enumerate(idx):
                    m = m * fac[2 + k][ii]
                res[(slice(None), slice(None)) + idx] = (a1 * m) @ fac[1].T
            out.append(res)
        return out

    def factors(self, rules, axes):
        return [[e_of(np.outer(ax, t ** (i + 1))) for i, ax in enumerate(axes)]
                for t, _ in rules]


# --------------------------------------------------------------------------
# weighted norms

@dataclass(frozen=True)
class GridPlan:
    axes: tuple
    spacing: tuple
    r_cut: float
    tail_mass: float

    @property
    def points(self) -> int:
        return math.prod(len(a) for a in self.axes)


def plan_grid(ball: Ball, bandwidth, p: float, profile: WeightProfile,
              cfg: QuadratureConfig) -> GridPlan:
    """Tensor grid centred on the ball, fine enough for |f|^p w_B.

    Spacing per axis is 1/(oversample * ((p/2) * W_i + 2 E / R)); the second term
    resolves the weight's cusp at the centre when f is nearly constant.
    """
    n = ball.dim
    prof = profile.for_dim(n)
    R = ball.radius
    u_cut = radius_for_tail(n, prof, cfg.tail_tol)
    r_cut = u_cut * R
    band = np.asarray(bandwidth, dtype=float)
    rate = cfg.grid_oversample * (0.5 * max(p, 2.0) * band + 2.0 * prof.exponent / R)
    axes, spacing = [], []
    for c, q in zip(ball.center, rate):
        h = 1.0 / q
        k = math.ceil(r_cut / h)
        if 2 * k + 1 > 200_000:
            raise QuadratureBudgetExceeded(f"axis needs {2 * k + 1} points")
        axes.append(c + h * np.arange(-k, k + 1))
        spacing.append(h)
    plan = GridPlan(tuple(axes), tuple(spacing), r_cut, weight_mass(n, R, prof, inner=u_cut))
    if plan.points > cfg.max_grid_points:
        raise QuadratureBudgetExceeded(f"{plan.points} grid points > {cfg.max_grid_points}")
    return plan


def _block_weights(ball, prof, plan, rows):
    """Weight on the grid block (rows of axis 0), zero outside the cut radius."""
    grids = np.meshgrid(plan.axes[0][rows], *plan.axes[1:], indexing="ij")
    r2 = sum((gx - c) ** 2 for gx, c in zip(grids, ball.center))
    r = np.sqrt(r2)
    w = np.exp(-prof.exponent * np.log1p(r / ball.radius))
    w[r > plan.r_cut] = 0.0
    # coarse grid (every other node, centre included) for the error estimate
    k0 = (len(plan.axes[0]) - 1) // 2
    idx = [np.arange(rows.start, rows.stop) - k0] + [np.arange(len(a)) - (len(a) - 1) // 2
                                                     for a in plan.axes[1:]]
    mask = np.ones(w.shape, dtype=bool)
    for ax, ix in enumerate(idx):
        shape = [1] * w.ndim
        shape[ax] = -1
        mask &= (ix % 2 == 0).reshape(shape)
    return w, mask


def _half_power(a2, p: float):
    """a2 ** (p/2), by repeated multiplication when p is an even integer."""
    if p == int(p) and int(p) % 2 == 0 and p <= 32:
        k = int(p) // 2
        out = a2.copy()
        for _ in range(k - 1):
            out *= a2
        return out
    return a2 ** (0.5 * p)


def family_norms(family: ExtensionFamily, ball: Ball, p_list, profile: WeightProfile,
                 cfg: QuadratureConfig | None = None, *, sharp: bool = True,
                 plan: GridPlan | None = None) -> dict:
    """Weighted L^p norms of every piece and of their union, for each p.

    Returns ``{p: {"union": NormResult, "pieces": [NormResult, ...]}}``.
    """
    cfg = cfg or family.cfg
    p_list = [float(p) for p in p_list]
    if any(p < 1 for p in p_list):
        raise ValidationError("p must be >= 1")
    if ball.dim != family.n:
        raise ValidationError("ball dimension does not match n")
    prof = profile.for_dim(ball.dim)
    plan = plan or plan_grid(ball, family.bandwidth, max(p_list), prof, cfg)
    rules = family.rules(plan.axes)
    fac = family.factors(rules, plan.axes)
    m0 = len(plan.axes[0])
    other = math.prod(len(a) for a in plan.axes[1:])
    npc = len(family.pieces)
    # keep the block's piece values near 400 MB
    block = max(1, min(m0, 25_000_000 // (other * (npc + 1))))
    acc = np.zeros((len(p_list), npc + 1))
    acc_coarse = np.zeros_like(acc)
    for start in range(0, m0, block):
        rows = slice(start, min(m0, start + block))
        w, mask = _block_weights(ball, prof, plan, rows)
        vals = family.evaluate_block(rules, fac, rows)
        union = sum(vals) if vals else np.zeros_like(w, dtype=complex)
        for k, v in enumerate(vals + [union]):
            a2 = v.real ** 2 + v.imag ** 2
            for ip, p in enumerate(p_list):
                f = _half_power(a2, p) * w
                acc[ip, k] += f.sum()
                acc_coarse[ip, k] += f[mask].sum()
    cell = math.prod(plan.spacing)
    norm_vol = ball.volume if sharp else 1.0
    out = {}
    for ip, p in enumerate(p_list):
        res = []
        for k in range(npc + 1):
            integral = acc[ip, k] * cell
            coarse = acc_coarse[ip, k] * cell * 2 ** ball.dim
            value = (integral / norm_vol) ** (1 / p)
            sup = family.sup_bound
            trunc = (sup ** p * plan.tail_mass / norm_vol) ** (1 / p)
            err = value * abs(integral - coarse) / (p * integral) if integral > 0 else 0.0
            res.append(NormResult(float(value), float(trunc), float(err)))
        out[p] = {"union": res[-1], "pieces": res[:-1]}
    return out


def coefficient_batch_norms(basis: ExtensionFamily, coeffs, ball: Ball, p_list,
                            profile: WeightProfile, cfg: QuadratureConfig | None = None, *,
                            sharp: bool = True, plan: GridPlan | None = None) -> dict:
    """Norms of sum_j c_j phi_j for many coefficient rows c, phi_j = E_{J_j} of the
    basis function, sharing one pass over the grid.

    Returns ``{p: {"unions": [NormResult per row], "basis": [NormResult per piece]}}``;
    the norm of the piece c_j phi_j is ``|c_j|`` times the basis norm.
    """
    cfg = cfg or basis.cfg
    C = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    npc = len(basis.pieces)
    if C.shape[1] != npc:
        raise ValidationError(f"need {npc} coefficients per row, got {C.shape[1]}")
    p_list = [float(p) for p in p_list]
    if any(p < 1 for p in p_list):
        raise ValidationError("p must be >= 1")
    prof = profile.for_dim(ball.dim)
    plan = plan or plan_grid(ball, basis.bandwidth, max(p_list), prof, cfg)
    rules = basis.rules(plan.axes)
    fac = basis.factors(rules, plan.axes)
    m0 = len(plan.axes[0])
    other = math.prod(len(a) for a in plan.axes[1:])
    ntr = C.shape[0]
    block = max(1, min(m0, 20_000_000 // (other * (npc + ntr))))
    acc_b = np.zeros((len(p_list), npc))
    acc_bc = np.zeros_like(acc_b)
    acc_u = np.zeros((len(p_list), ntr))
    acc_uc = np.zeros_like(acc_u)
    for start in range(0, m0, block):
        rows = slice(start, min(m0, start + block))
        w, mask = _block_weights(ball, prof, plan, rows)
        vals = np.stack([v.reshape(-1) for v in basis.evaluate_block(rules, fac, rows)])
        wf, mf = w.reshape(-1), mask.reshape(-1)
        for target, coarse, V in ((acc_b, acc_bc, vals), (acc_u, acc_uc, C @ vals)):
            a2 = V.real ** 2 + V.imag ** 2
            for ip, p in enumerate(p_list):
                f = _half_power(a2, p) * wf
                target[ip] += f.sum(axis=1)
                coarse[ip] += f[:, mf].sum(axis=1)
    cell = math.prod(plan.spacing)
    norm_vol = ball.volume if sharp else 1.0
    h_sup = np.array([np.abs(basis.g.coeffs[pc]).sum() / basis.g.cells for pc in basis.pieces])
    out = {}
    for ip, p in enumerate(p_list):
        def results(acc, accc, sups):
            res = []
            for k in range(acc.shape[1]):
                integral = acc[ip, k] * cell
                coarse = accc[ip, k] * cell * 2 ** ball.dim
                value = (integral / norm_vol) ** (1 / p)
                trunc = (sups[k] ** p * plan.tail_mass / norm_vol) ** (1 / p)
                err = value * abs(integral - coarse) / (p * integral) if integral > 0 else 0.0
                res.append(NormResult(float(value), float(trunc), float(err)))
            return res
        out[p] = {"basis": results(acc_b, acc_bc, h_sup),
                  "unions": results(acc_u, acc_uc, np.abs(C) @ h_sup)}
    return out


class ConstantField:
    """f(x) = c everywhere; spectrum is the single frequency 0."""

    def __init__(self, value: complex, n: int):
        self.value, self.n = complex(value), n

    bandwidth = property(lambda self: np.zeros(self.n))
    sup_bound = property(lambda self: abs(self.value))

    def evaluate_grid(self, axes, rows):
        return np.full((len(axes[0][rows]),) + tuple(len(a) for a in axes[1:]), self.value)


class ExtensionField:
    """E_J g as a single evaluable field."""

    def __init__(self, g: StepFunction, J, n: int, cfg: QuadratureConfig = QuadratureConfig()):
        self.family = ExtensionFamily(g, [g.cell_range(*J)], n, cfg)
        self.n = n

    bandwidth = property(lambda self: self.family.bandwidth)
    sup_bound = property(lambda self: self.family.sup_bound)


def weighted_norm(f, ball: Ball, p: float, profile: WeightProfile = WeightProfile(),
                  cfg: QuadratureConfig = QuadratureConfig(), *, sharp: bool = True) -> NormResult:
    """(|B|^-1 int |f|^p w_B)^(1/p) (``sharp``) or (int |f|^p w_B)^(1/p).

    ``f`` is an :class:`ExtensionField`, :class:`ExtensionFamily` (its union is
    used) or any object with ``bandwidth``, ``sup_bound`` and
    ``evaluate_grid(axes, rows)``.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    if isinstance(f, ExtensionField):
        f = f.family
    if isinstance(f, ExtensionFamily):
        return family_norms(f, ball, [p], profile, cfg, sharp=sharp)[float(p)]["union"]
    prof = profile.for_dim(ball.dim)
    plan = plan_grid(ball, f.bandwidth, p, prof, cfg)
    m0 = len(plan.axes[0])
    other = math.prod(len(a) for a in plan.axes[1:])
    block = max(1, 4_000_000 // other)
    acc = coarse = 0.0
    for start in range(0, m0, block):
        rows = slice(start, min(m0, start + block))
        w, mask = _block_weights(ball, prof, plan, rows)
        v = np.abs(f.evaluate_grid(plan.axes, rows)) ** p * w
        acc += v.sum()
        coarse += v[mask].sum()
    cell = math.prod(plan.spacing)
    integral, coarse = acc * cell, coarse * cell * 2 ** ball.dim
    vol = ball.volume if sharp else 1.0
    value = (integral / vol) ** (1 / p)
    trunc = (f.sup_bound ** p * plan.tail_mass / vol) ** (1 / p)
    err = value * abs(integral - coarse) / (p * integral) if integral > 0 else 0.0
    return NormResult(float(value), float(trunc), float(err))


# --------------------------------------------------------------------------
# torus moments

def exact_grid_sizes(inst: Instance) -> tuple:
    """Minimal grid sizes 2 s N^i + 1 making the grid average of |F|^{2s} exact."""
    return tuple(2 * inst.s * inst.N ** i + 1 for i in range(1, inst.n + 1))


def torus_integral_power(inst: Instance, M=None, *, max_points: int = 50_000_000) -> int:
    """J_{s,n}(N) as the average of |F|^{2s} over an M_1 x ... x M_n grid.

    |F|^{2s} is a trigonometric polynomial of degree < M_i / 2 in x_i, so the
    grid average equals the torus integral.  The grid is streamed one slice of
    trailing coordinates at a time and summed in fixed index order.
    """
    n, s, N = inst.n, inst.s, inst.N
    need = exact_grid_sizes(inst)
    M = tuple(need if M is None else (int(m) for m in M))
    if len(M) != n:
        raise ValidationError("grid needs one size per coordinate")
    if any(m < 2 * s * (N ** i - 1) + 1 for i, m in enumerate(M, start=1)):
        raise ValidationError(f"grid {M} too coarse for exactness, need {need}")
    total_pts = math.prod(M)
    if total_pts > max_points:
        raise BudgetExceeded(f"torus grid {total_pts} points > {max_points}")
    j = np.arange(1, N + 1)
    # e(j^i k / M_i) computed exactly from the integer residue j^i k mod M_i
    fac = []
    for i, m in enumerate(M, start=1):
        k = np.arange(m)
        res = np.mod(np.outer(k, np.mod(j ** i, m)), m)
        fac.append(np.exp(2j * np.pi * res / m))
    partial = []
    for idx in np.ndindex(*M[2:]):
        b = fac[1].copy()
        for t, ii in enumerate(idx):
            b = b * fac[2 + t][ii][None, :]
        F = fac[0] @ b.T
        partial.append(float(np.sum(np.abs(F) ** (2 * s))))
    avg = math.fsum(partial) / total_pts
    val = round(avg)
    if abs(avg - val) > 1e-6:
        raise NonIntegerResult(f"grid average {avg!r} is not an integer")
    return int(val)


def moment_monte_carlo(inst: Instance, cfg: QuadratureConfig = QuadratureConfig(), *,
                       stream: int = 0) -> tuple:
    """Sample mean of |F|^{2s} at uniform torus points and its standard error."""
    if cfg.mc_samples < 100:
        raise ValidationError("need at least 100 samples")
    rng = make_rng(cfg.seed, 1, stream)
    total, total_sq, done = 0.0, 0.0, 0
    batch = max(1, 2_000_000 // inst.N)
    while done < cfg.mc_samples:
        m = min(batch, cfg.mc_samples - done)
        x = rng.random((m, inst.n))
        v = np.abs(eval_F(x, inst.N)) ** (2 * inst.s)
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return float(mean), float(math.sqrt(var / (done - 1)) if done > 1 else 0.0)
