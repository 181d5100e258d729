"""Ratio experiments: each inequality evaluated as LHS / RHS at desk scale.

Ratios are lower bounds for the best constants (those are sups over all g),
computed with the weighted norms of :mod:`vinolab.expsum`.  A ratio counts as
converged when doubling the quadrature density moves it by less than 5%.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from .core import Ball, StepFunction, WeightProfile, as_fraction, make_rng
from .errors import ValidationError
from .expsum import (ExtensionFamily, QuadratureConfig, coefficient_batch_norms,
                     family_norms, weight_mass)

# one Gauss-Legendre panel of 8 nodes per oscillation is ample; the doubled
# configuration used for the convergence flag has two
DEFAULT_CFG = QuadratureConfig(panels_per_oscillation=1.0, grid_oversample=1.5)
CONVERGENCE_TOL = 0.05


@dataclass
class RatioExperiment:
    inequality_id: str
    n: int
    p: float
    delta: float | None
    seed: int | None
    trials: int
    ratios: list
    converged: list = field(default_factory=list)
    quadrature_errors: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios)

    def to_record(self) -> dict:
        d = asdict(self)
        d["max_ratio"] = self.max_ratio
        return d


def _recip(delta) -> int:
    d = as_fraction(delta)
    if d <= 0 or d > 1 or d.numerator != 1:
        raise ValidationError(f"delta must be 1/m for a positive integer m, got {delta}")
    return d.denominator


def _aligned(g: StepFunction, m: int) -> StepFunction:
    """``g`` on a grid whose cell count is a multiple of ``m``."""
    if g.cells % m == 0:
        return g
    if m % g.cells == 0:
        return g.refined(m // g.cells)
    return g.refined(m // math.gcd(m, g.cells))


def _pieces(g: StepFunction, m: int, lo: int = 0, hi: int | None = None) -> list:
    """Cell index lists of the 1/m intervals numbered lo..hi-1."""
    k = g.cells // m
    hi = m if hi is None else hi
    return [list(range(j * k, (j + 1) * k)) for j in range(lo, hi)]


def default_ball(n: int, delta) -> Ball:
    return Ball.at_origin(n, float(_recip(delta)) ** n)


def _ratio(res) -> tuple:
    """(ratio, relative quadrature error) from a family_norms entry."""
    u = res["union"]
    rhs2 = sum(r.value ** 2 for r in res["pieces"])
    if rhs2 == 0:
        raise ValidationError("g vanishes on every piece")
    ratio = u.value / math.sqrt(rhs2)
    err = (u.quadrature_estimate_error / u.value if u.value else 0.0)
    err += sum(r.value * r.quadrature_estimate_error for r in res["pieces"]) / rhs2
    return ratio, err


def decoupling_ratios(n: int, p_list, delta, g: StepFunction, ball: Ball | None = None,
                      cfg: QuadratureConfig = DEFAULT_CFG,
                      profile: WeightProfile = WeightProfile()) -> dict:
    """{p: (ratio, relative quadrature error)} for several p on one grid."""
    m = _recip(delta)
    g = _aligned(g, m)
    ball = ball or default_ball(n, delta)
    fam = ExtensionFamily(g, _pieces(g, m), n, cfg)
    res = family_norms(fam, ball, p_list, profile, cfg)
    return {p: _ratio(r) for p, r in res.items()}


def decoupling_ratio(n: int, p: float, delta, g: StepFunction, ball: Ball | None = None,
                     cfg: QuadratureConfig = DEFAULT_CFG,
                     profile: WeightProfile = WeightProfile()) -> float:
    """||E_{[0,1]} g||_{L^p(w_B)} / (sum_{|J|=delta} ||E_J g||^2_{L^p(w_B)})^{1/2}."""
    return decoupling_ratios(n, [p], delta, g, ball, cfg, profile)[float(p)][0]


def _batch_ratios(n: int, m: int, coeffs, ball: Ball, p_list, cfg, profile) -> dict:
    """{p: [(ratio, rel error) per coefficient row]} for g = sum_j c_j 1_{J_j}, |J_j| = 1/m."""
    basis = StepFunction.constant(m)
    fam = ExtensionFamily(basis, [[j] for j in range(m)], n, cfg)
    res = coefficient_batch_norms(fam, coeffs, ball, p_list, profile, cfg)
    C = np.abs(np.atleast_2d(coeffs))
    out = {}
    for p, r in res.items():
        bv = np.array([x.value for x in r["basis"]])
        be = np.array([x.quadrature_estimate_error for x in r["basis"]])
        rows = []
        for k, u in enumerate(r["unions"]):
            piece = C[k] * bv
            rhs2 = float(np.sum(piece ** 2))
            ratio = u.value / math.sqrt(rhs2)
            err = (u.quadrature_estimate_error / u.value if u.value else 0.0)
            err += float(np.sum(piece * C[k] * be)) / rhs2
            rows.append((ratio, err))
        out[p] = rows
    return out


def trial_coefficients(m: int, trials: int, seed: int, *, include_constant: bool = True):
    """Default trial family: g = 1 first, then random unimodular coefficients."""
    rows = []
    if include_constant:
        rows.append(np.ones(m, dtype=complex))
    rng = make_rng(seed, 4, m)
    while len(rows) < trials:
        rows.append(np.exp(2j * np.pi * rng.random(m)))
    return np.array(rows[:trials])


def vp_scan_multi(n: int, p_list, delta_list, trials: int, seed: int = 0,
                  cfg: QuadratureConfig = DEFAULT_CFG,
                  profile: WeightProfile = WeightProfile(), *,
                  check_convergence: bool = True) -> dict:
    """Max decoupling ratio per delta over the trial family, for each p.

    Returns ``{p: RatioExperiment}`` (ratios = per-delta maxima) with the fitted
    exponent under ``params["eta_hat"]``.  Convergence is checked by recomputing
    the maximizing trial with doubled quadrature density.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    p_list = [float(p) for p in p_list]
    deltas = [as_fraction(d) for d in delta_list]
    per_p = {p: {"max": [], "arg": [], "err": [], "conv": [], "shift": [], "all": []} for p in p_list}
    for d in deltas:
        m = _recip(d)
        ball = default_ball(n, d)
        C = trial_coefficients(m, trials, seed)
        res = _batch_ratios(n, m, C, ball, p_list, cfg, profile)
        redo = {}
        for p in p_list:
            vals = [r for r, _ in res[p]]
            k = int(np.argmax(vals))
            rec = per_p[p]
            rec["max"].append(vals[k])
            rec["arg"].append(k)
            rec["err"].append(res[p][k][1])
            rec["all"].append(vals)
            redo.setdefault(k, []).append(p)
        for k, ps in redo.items():
            if not check_convergence:
                for p in ps:
                    per_p[p]["conv"].append(None)
                    per_p[p]["shift"].append(None)
                continue
            fine = _batch_ratios(n, m, C[k:k + 1], ball, ps, cfg.doubled(), profile)
            for p in ps:
                shift = abs(fine[p][0][0] / per_p[p]["max"][-1] - 1)
                per_p[p]["conv"].append(bool(shift < CONVERGENCE_TOL))
                per_p[p]["shift"].append(shift)
    out = {}
    lx = np.log([float(1 / d) for d in deltas])
    for p in p_list:
        rec = per_p[p]
        eta = float(np.polyfit(lx, np.log(rec["max"]), 1)[0]) if len(deltas) > 1 else float("nan")
        out[p] = RatioExperiment(
            "main_decoupling", n, p, None, seed, trials, rec["max"], rec["conv"], rec["err"],
            {"deltas": [f"{d.numerator}/{d.denominator}" for d in deltas], "eta_hat": eta,
             "argmax_trial": rec["arg"], "convergence_shift": rec["shift"],
             "trial_ratios": rec["all"], "weight_exponent": profile.for_dim(n).exponent},
        )
    return out


def vp_scan(n: int, p: float, delta_list, trials: int, seed: int = 0,
            cfg: QuadratureConfig = DEFAULT_CFG, profile: WeightProfile = WeightProfile(),
            **kw) -> RatioExperiment:
    """Per-delta max ratio over {g = 1} and random unimodular g, plus eta_hat
    = slope of log max ratio against log(1/delta)."""
    return vp_scan_multi(n, [p], delta_list, trials, seed, cfg, profile, **kw)[float(p)]


def l2_orthogonality_ratio(n: int, delta, g: StepFunction, R: float | None = None,
                           cfg: QuadratureConfig = DEFAULT_CFG,
                           profile: WeightProfile = WeightProfile()) -> float:
    """||E_{[0,1]} g||^2_{L^2(w_B)} / sum_{|J|=1/R} ||E_J g||^2_{L^2(w_B)}, B of radius R."""
    m = _recip(delta)
    R = float(m) if R is None else float(R)
    if abs(R * float(as_fraction(delta)) - 1) > 1e-12:
        raise ValidationError("pieces must have length 1/R")
    r, _ = decoupling_ratios(n, [2.0], delta, g, Ball.at_origin(n, R), cfg, profile)[2.0]
    return r * r


def l2_orthogonality_scan(n: int, delta_list, trials: int = 100, seed: int = 0,
                          cfg: QuadratureConfig = DEFAULT_CFG,
                          profile: WeightProfile = WeightProfile(), *,
                          check_convergence: bool = True) -> list:
    """One RatioExperiment per delta over ``trials`` random unimodular g (R = 1/delta)."""
    out = []
    for d in delta_list:
        m = _recip(d)
        ball = Ball.at_origin(n, float(m))
        C = trial_coefficients(m, trials, seed, include_constant=False)
        res = _batch_ratios(n, m, C, ball, [2.0], cfg, profile)[2.0]
        ratios = [r * r for r, _ in res]
        errs = [2 * e for _, e in res]
        conv = []
        if check_convergence:
            k = int(np.argmax(ratios))
            fine = _batch_ratios(n, m, C[k:k + 1], ball, [2.0], cfg.doubled(), profile)[2.0]
            conv = [bool(abs(fine[0][0] ** 2 / ratios[k] - 1) < CONVERGENCE_TOL)]
        out.append(RatioExperiment("l2_orth", n, 2.0, float(as_fraction(d)), seed, trials,
                                   ratios, conv, errs, {"R": float(m)}))
    return out


def lower_dim_ratio(sigma, R: float, g: StepFunction, t0=0, p: float = 6.0,
                    cfg: QuadratureConfig = DEFAULT_CFG,
                    profile: WeightProfile = WeightProfile()) -> float:
    """||E_I g||_{L^p#(w_B)} / (sum_{|J|=R^{-1/2}} ||E_J g||^2)^{1/2} in R^3, I = [t0, t0+sigma].

    R must be a perfect square with sigma * sqrt(R) an integer.
    """
    sigma, t0 = as_fraction(sigma), as_fraction(t0)
    r = math.isqrt(int(R))
    if r * r != R:
        raise ValidationError("R must be a perfect square")
    k = sigma * r
    if k.denominator != 1 or not 0 <= t0 < t0 + sigma <= 1:
        raise ValidationError("I must be a union of R^{-1/2} intervals inside [0, 1]")
    lo = t0 * r
    if lo.denominator != 1:
        raise ValidationError("t0 must be a multiple of R^{-1/2}")
    g = _aligned(g, r)
    fam = ExtensionFamily(g, _pieces(g, r, int(lo), int(lo + k)), 3, cfg)
    res = family_norms(fam, Ball.at_origin(3, float(R)), [p], profile, cfg)
    return _ratio(res[float(p)])[0]


def restriction_field(n: int, a, t, x):
    """sum_i a_i e(x . (t_i, ..., t_i^n)) at the rows of x."""
    a = np.asarray(a, dtype=complex)
    t = np.asarray(t, dtype=float)
    tp = np.stack([t ** (i + 1) for i in range(n)])
    out = np.empty(x.shape[0], dtype=complex)
    step = max(1, 4_000_000 // t.size)
    for s in range(0, x.shape[0], step):
        ph = x[s:s + step] @ tp
        out[s:s + step] = np.exp(2j * np.pi * (ph - np.round(ph))) @ a
    return out


def sample_weight(n: int, R: float, center, count: int, rng, profile: WeightProfile):
    """Points distributed with density proportional to (1 + |x-c|/R)^(-E)."""
    E = profile.for_dim(n).exponent
    v = rng.beta(n, E - n, size=count)
    u = v / (1 - v)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.asarray(center, dtype=float) + (R * u)[:, None] * d


def discrete_restriction_ratio(n: int, p: float, N: int, a, t, R: float | None = None,
                               cfg: QuadratureConfig = DEFAULT_CFG,
                               profile: WeightProfile = WeightProfile(), *,
                               stream: int = 0) -> dict:
    """(E_w |f|^p)^{1/p} / (||a||_2 (1 + N^{(1 - n(n+1)/p)/2})) for f = sum a_i e(x.(t_i,...,t_i^n)).

    E_w is the average against w_B normalised to unit mass, estimated by Monte
    Carlo with points drawn from w_B itself.  Returns the ratio, the normalised
    norm ``lhs`` and its standard error.
    """
    a = np.asarray(a, dtype=complex)
    t = np.asarray(t, dtype=float)
    if a.shape != (N,) or t.shape != (N,):
        raise ValidationError("need N coefficients and N points")
    i = np.arange(1, N + 1)
    if np.any(t <= (i - 1) / N) or np.any(t > i / N):
        raise ValidationError("t_i must lie in ((i-1)/N, i/N]")
    norm2 = float(np.linalg.norm(a))
    if norm2 == 0:
        raise ValidationError("a must be nonzero")
    R = float(N) ** n if R is None else float(R)
    if R < float(N) ** n:
        raise ValidationError("R must be at least N^n")
    rng = make_rng(cfg.seed, 5, N, stream)
    x = sample_weight(n, R, np.zeros(n), cfg.mc_samples, rng, profile)
    f = np.abs(restriction_field(n, a, t, x)) ** p
    mean = float(f.mean())
    se = float(f.std(ddof=1) / math.sqrt(f.size)) if f.size > 1 else 0.0
    lhs = mean ** (1 / p)
    lhs_se = lhs * se / (p * mean) if mean > 0 else 0.0
    bound = norm2 * (1 + N ** (0.5 * (1 - n * (n + 1) / p)))
    return {"ratio": lhs / bound, "lhs": lhs, "lhs_stderr": lhs_se, "norm2": norm2}


def inflation_cover(center, radius: float, small: float) -> list:
    """Centres of the cover of B(center, radius) by balls of radius ``small``:
    the square lattice of spacing small * sqrt(2), kept when the lattice
    cell touches B."""
    h = small * math.sqrt(2)
    k = math.ceil(radius / h) + 1
    out = []
    for i in range(-k, k + 1):
        for j in range(-k, k + 1):
            c = (center[0] + i * h, center[1] + j * h)
            if math.hypot(i * h, j * h) <= radius + small:
                out.append(c)
    return out


def ball_inflation_ratio(p: float, rho, g: StepFunction, K: int = 4,
                         cfg: QuadratureConfig = DEFAULT_CFG,
                         profile: WeightProfile = WeightProfile()) -> dict:
    """Bilinear ball inflation in R^2 with k = 1, M = 2, I_1 = [0, 1/K], I_2 = [2/K, 3/K].

    LHS averages prod_i (sum_{J in I_i, |J| = rho} ||E_J g||^2_{L^{p/2}#(w_Delta)})^{p/4}
    over the cover of B (radius rho^-2) by balls Delta of radius 1/rho; RHS is
    the same product with w_B.
    """
    if p < 4:
        raise ValidationError("ball inflation needs p >= 4")
    rho = as_fraction(rho)
    m = _recip(rho)
    if K < 4 or m % K:
        raise ValidationError("need K >= 4 with rho a multiple of 1/K")
    g = _aligned(g, m)
    per = m // K
    groups = [_pieces(g, m, 0, per), _pieces(g, m, 2 * per, 3 * per)]
    fam = ExtensionFamily(g, groups[0] + groups[1], 2, cfg)
    q = p / 2

    def product(ball):
        res = family_norms(fam, ball, [q], profile, cfg)[q]["pieces"]
        sums = [sum(r.value ** 2 for r in res[:per]), sum(r.value ** 2 for r in res[per:])]
        return (sums[0] * sums[1]) ** (p / 4)

    R = float(m) ** 2
    big = Ball.at_origin(2, R)
    cover = inflation_cover((0.0, 0.0), R, float(m))
    lhs = sum(product(Ball(c, float(m))) for c in cover) / len(cover)
    rhs = product(big)
    return {"ratio": lhs / rhs, "lhs": lhs, "rhs": rhs, "cover_size": len(cover)}
