"""Bifurcation weights alpha_j, beta_j, the processing tree, and the b_j gamma_j series.

Node types: an ``A`` leaf is an A_p term closed off at ball exponent ``b``;
a ``D`` node of level j stands for D_{jp/n}; level n is the D_p leaf, which
contributes nothing to the series.

Processing a level-j node (1 <= j <= n-1) of scale v happens at ball exponent
(j+1) v and produces, with exact rational weights,

    A_p leaf,  b = (j+1) v,          (1-alpha_j) prod_{m=2..j} (1-beta_m)
    D_k,       scale v (j+1)/k,      (1-alpha_j) beta_k prod_{m=k+1..j} (1-beta_m)   2 <= k <= j
    D_{j+1},   scale v,              alpha_j

which is what repeated application of the two-way splits gives after the
intermediate L^{j(j+1)} terms are expanded.  The root is D_1 at scale 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import as_fraction, fraction_str
from .errors import DegenerateExponent, DepthBudgetExceeded, ValidationError


@dataclass(frozen=True)
class WeightSet:
    n: int
    p: Fraction
    alpha: dict   # j -> alpha_j, 1 <= j <= n-1
    beta: dict    # j -> beta_j, 2 <= j <= n-1

    def to_record(self) -> dict:
        return {
            "n": self.n, "p": fraction_str(self.p),
            "alpha": {str(j): fraction_str(v) for j, v in self.alpha.items()},
            "beta": {str(j): fraction_str(v) for j, v in self.beta.items()},
        }


def _interpolate(A: Fraction, B: Fraction, C: Fraction) -> Fraction:
    """x with 1/A = (1-x)/B + x/C."""
    if A == 0 or B == 0 or C == 0 or B == C:
        raise DegenerateExponent(f"interpolation endpoints degenerate: {A}, {B}, {C}")
    return (1 / A - 1 / B) / (1 / C - 1 / B)


def weights_from_relations(n: int, p) -> WeightSet:
    """Solve the defining interpolation relations

        1/(jp/n)   = (1-alpha_j)/(j(j+1)) + alpha_j/((j+1)p/n)
        1/(j(j+1)) = (1-beta_j)/((j-1)j)  + beta_j/(jp/n)
    """
    if n < 2:
        raise ValidationError("n must be >= 2")
    p = as_fraction(p)
    D = p / n
    al = {j: _interpolate(j * D, Fraction(j * (j + 1)), (j + 1) * D) for j in range(1, n)}
    be = {j: _interpolate(Fraction(j * (j + 1)), Fraction((j - 1) * j), j * D)
          for j in range(2, n)}
    return WeightSet(n, p, al, be)


def closed_form_weights(n: int, p) -> WeightSet:
    """alpha_j = (Delta-j-1)/(Delta-j), beta_j = 2 Delta/((j+1)(Delta-j+1)), Delta = p/n."""
    p = as_fraction(p)
    D = p / n
    if any(D == j for j in range(1, n)) or any(D == j - 1 for j in range(2, n)):
        raise DegenerateExponent(f"p/n = {D} is a pole of the closed forms")
    al = {j: (D - j - 1) / (D - j) for j in range(1, n)}
    be = {j: 2 * D / ((j + 1) * (D - j + 1)) for j in range(2, n)}
    return WeightSet(n, p, al, be)


def gamma_b_n3(p, r: int) -> list:
    """(gamma_j, b_j) for j = 0..r in dimension 3:

    gamma_0 = 1 - alpha_1,  gamma_j = alpha_1 (1-alpha_2)^j beta_2^(j-1) (1-beta_2),
    b_j = 2 (3/2)^j.
    """
    w = weights_from_relations(3, p)
    a1, a2, b2 = w.alpha[1], w.alpha[2], w.beta[2]
    out = [(1 - a1, Fraction(2))]
    for j in range(1, r + 1):
        out.append((a1 * (1 - a2) ** j * b2 ** (j - 1) * (1 - b2), 2 * Fraction(3, 2) ** j))
    return out


def _children(w: WeightSet, j: int, v: Fraction) -> list:
    """[(kind, level, scale, weight)] produced by processing D_j at scale v."""
    out = []
    keep = 1 - w.alpha[j]
    for k in range(j, 1, -1):
        out.append(("D", k, v * Fraction(j + 1, k), keep * w.beta[k]))
        keep *= 1 - w.beta[k]
    out.append(("A", None, (j + 1) * v, keep))
    out.append(("D", j + 1, v, w.alpha[j]))
    return out


@dataclass
class TreeNode:
    kind: str                 # "A" or "D"
    level: int | None         # j for D nodes (n means the D_p leaf)
    scale: Fraction           # b for A leaves, v for D nodes
    weight: Fraction          # edge weight from the parent
    total: Fraction           # product of weights from the root
    children: list = field(default_factory=list)

    @property
    def ball(self) -> Fraction:
        """Ball exponent: b for A leaves, (j+1) v at which a D node is processed."""
        return self.scale if self.kind == "A" else (self.level + 1) * self.scale

    def label(self, n: int) -> str:
        if self.kind == "A":
            return f"A_p(b={self.scale})"
        if self.level == n:
            return f"D_p(v={self.scale})"
        lev = "" if self.level == 1 else self.level
        return f"D_{{{lev}p/{n}}}(v={self.scale})"


@dataclass
class IterationTree:
    n: int
    p: Fraction
    depth: int
    root: TreeNode

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list:
        return [x for x in self.nodes() if not x.children]

    def leaf_terms(self) -> list:
        """(label, total weight) for every leaf, including unprocessed D nodes."""
        return [(x.label(self.n), x.total) for x in self.leaves()]

    def gamma_b(self) -> list:
        """(gamma, b) pairs: A-leaf weights summed per distinct b, sorted by b."""
        acc = {}
        for x in self.leaves():
            if x.kind == "A":
                acc[x.scale] = acc.get(x.scale, Fraction(0)) + x.total
        return [(acc[b], b) for b in sorted(acc)]

    def to_json(self) -> dict:
        def enc(node):
            return {
                "type": "A_p" if node.kind == "A" else ("D_p" if node.level == self.n else "D"),
                "level": node.level,
                "scale": fraction_str(node.scale),
                "ball_exponent": fraction_str(node.ball),
                "weight": [node.weight.numerator, node.weight.denominator],
                "total": [node.total.numerator, node.total.denominator],
                "children": [enc(c) for c in node.children],
            }
        return {"n": self.n, "p": fraction_str(self.p), "depth": self.depth, "root": enc(self.root)}

    def to_text(self) -> str:
        """One node per line, two spaces of indent per level, ``label  [weight]``."""
        lines = []

        def walk(node, ind):
            lines.append(f"{'  ' * ind}{node.label(self.n)}  [{fraction_str(node.weight)}]")
            for c in node.children:
                walk(c, ind + 1)
        walk(self.root, 0)
        return "\n".join(lines)


def build_tree(n: int, p, depth: int, *, max_nodes: int = 200_000) -> IterationTree:
    """Expand the tree through ``depth`` processing rounds.

    Round 1 processes the root (the first bifurcation); each later round
    processes every D node created in the round before.  In dimension 3 this
    is the same as processing in increasing ball exponent.
    """
    if n < 2 or depth < 0:
        raise ValidationError("need n >= 2 and depth >= 0")
    w = weights_from_relations(n, p)
    root = TreeNode("D", 1, Fraction(1), Fraction(1), Fraction(1))
    frontier, count = [root], 1
    for _ in range(depth):
        nxt = []
        for node in frontier:
            for kind, lev, scale, wt in _children(w, node.level, node.scale):
                child = TreeNode(kind, lev, scale, wt, node.total * wt)
                node.children.append(child)
                count += 1
                if count > max_nodes:
                    raise DepthBudgetExceeded(f"tree exceeds {max_nodes} nodes")
                if kind == "D" and lev < n:
                    nxt.append(child)
        frontier = nxt
    return IterationTree(n, w.p, depth, root)


def _next_generation(w: WeightSet):
    """Value-weighted offspring matrix G[j, k] between levels 1..n-1 and the
    direct A_p contribution a[j] per unit scale."""
    n = w.n
    G = np.zeros((n - 1, n - 1))
    a = np.zeros(n - 1)
    for j in range(1, n):
        for kind, lev, scale, wt in _children(w, j, Fraction(1)):
            if kind == "A":
                a[j - 1] += float(wt * scale)
            elif lev < n:
                G[j - 1, lev - 1] += float(wt * scale)
    return G, a


@dataclass(frozen=True)
class SeriesResult:
    n: int
    p: Fraction
    r: int
    partial_sum: Fraction
    gamma_sum: Fraction
    terms: tuple               # (gamma_j, b_j gamma_j) contributed by round j, j = 0..r
    dominant_ratio: float
    tail_estimate: float

    def to_record(self) -> dict:
        return {
            "n": self.n, "p": fraction_str(self.p), "r": self.r,
            "partial_sum": fraction_str(self.partial_sum),
            "partial_sum_float": float(self.partial_sum),
            "gamma_sum": fraction_str(self.gamma_sum),
            "dominant_ratio": self.dominant_ratio,
            "tail_estimate": self.tail_estimate,
        }


def omega1_series(n: int, p, r: int) -> SeriesResult:
    """Partial sum of b gamma over the A_p leaves produced in rounds 0..r.

    Round j of the series is round j+1 of :func:`build_tree`.  Every child's
    weight is proportional to its parent's mass and its scale to the parent's
    scale, so per level it is enough to carry the exact totals of mass and of
    mass * scale over the pending nodes; the partial sums equal those of the
    full tree.  The tail estimate is sum_j (mass * scale)_j u_j over pending
    nodes, with u = (I - G)^{-1} a from the offspring matrix; ``dominant_ratio``
    is the spectral radius of G, and the series converges iff it is below 1.
    """
    if r < 0:
        raise ValidationError("r must be >= 0")
    w = weights_from_relations(n, p)
    rules = {j: _children(w, j, Fraction(1)) for j in range(1, n)}
    mass = {1: Fraction(1)}
    value = {1: Fraction(1)}   # sum of mass * scale
    total, gsum, terms = Fraction(0), Fraction(0), []
    for _ in range(r + 1):
        new_mass, new_value = {}, {}
        gamma, contrib = Fraction(0), Fraction(0)
        for j in mass:
            for kind, lev, scale, wt in rules[j]:
                if kind == "A":
                    gamma += mass[j] * wt
                    contrib += value[j] * wt * scale
                elif lev < n:
                    new_mass[lev] = new_mass.get(lev, Fraction(0)) + mass[j] * wt
                    new_value[lev] = new_value.get(lev, Fraction(0)) + value[j] * wt * scale
        mass, value = new_mass, new_value
        terms.append((gamma, contrib))
        total += contrib
        gsum += gamma
        if not mass:
            break
    G, a = _next_generation(w)
    rho = float(np.max(np.abs(np.linalg.eigvals(G)))) if G.size else 0.0
    if rho < 1:
        u = np.linalg.solve(np.eye(n - 1) - G, a)
        tail = float(sum(float(v) * u[j - 1] for j, v in value.items()))
    else:
        tail = float("inf")
    return SeriesResult(n, w.p, r, total, gsum, tuple(terms), rho, tail)


def series_as_json(res: SeriesResult) -> str:
    return json.dumps(res.to_record(), sort_keys=True)
