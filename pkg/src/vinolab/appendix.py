"""Exact solver for the omega/eta weight recursion and the omega_1 > 1 threshold.

For n >= 3 and rational Delta, theta the system is

    omega_j = (1 - alpha_j) eta_j + alpha_j omega_{j+1}                  1 <= j <= n-1
    eta_j   = (1 - beta_j) (j+1)/j eta_{j-1} + beta_j (j+1)/j omega_j    2 <= j <= n-1
    omega_n = theta,  eta_1 = 2

with alpha_j = (Delta-j-1)/(Delta-j) and beta_j = 2 Delta/((j+1)(Delta-j+1)).

Two independent routes are implemented: eliminating omega (so only
eta_2..eta_{n-1} remain) and solving all 2(n-1) unknowns at once.  A third,
iterative route in floating point exposes the monotone coefficients A_r, B_r.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import as_fraction, fraction_str
from .errors import DimensionTooSmall, NonAffine, SingularSystem, VinolabError


def alpha(j: int, Delta: Fraction) -> Fraction:
    return (Delta - (j + 1)) / (Delta - j)


def beta(j: int, Delta: Fraction) -> Fraction:
    return 2 * Delta / ((j + 1) * (Delta - j + 1))


def pole_set(n: int) -> set:
    """Delta values where alpha_j, beta_j or the eliminated system divide by zero."""
    return set(range(1, n))


def gauss_solve(A, b) -> list:
    """Solve A x = b exactly over the rationals.

    Partial pivoting picks the candidate with the largest numerator magnitude.
    """
    m = len(A)
    M = [[Fraction(v) for v in row] + [Fraction(rhs)] for row, rhs in zip(A, b)]
    for col in range(m):
        piv = max(range(col, m), key=lambda r: abs(M[r][col].numerator))
        if M[piv][col] == 0:
            raise SingularSystem("matrix is singular")
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        for r in range(col + 1, m):
            f = M[r][col] / p
            if f:
                for c in range(col, m + 1):
                    M[r][c] -= f * M[col][c]
    x = [Fraction(0)] * m
    for r in range(m - 1, -1, -1):
        acc = M[r][m] - sum(M[r][c] * x[c] for c in range(r + 1, m))
        x[r] = acc / M[r][r]
    return x


@dataclass(frozen=True)
class SystemSolution:
    n: int
    Delta: Fraction
    theta: Fraction
    omega: tuple   # omega_1 .. omega_n
    eta: tuple     # eta_1 .. eta_{n-1}

    @property
    def omega1(self) -> Fraction:
        return self.omega[0]

    def to_record(self) -> dict:
        return {
            "n": self.n, "Delta": fraction_str(self.Delta), "theta": fraction_str(self.theta),
            "omega": [fraction_str(w) for w in self.omega],
            "eta": [fraction_str(e) for e in self.eta],
        }


def _check(n: int, Delta: Fraction):
    if n < 3:
        raise DimensionTooSmall(f"n = {n} < 3")
    if Delta in pole_set(n):
        raise SingularSystem(f"Delta = {Delta} is a pole (integers 1..{n - 1})")


def solve_reduced(n: int, Delta, theta) -> SystemSolution:
    """Eliminate omega via omega_j = (sum_{k>=j} eta_k + (Delta-n) theta)/(Delta-j),
    solve the (n-2) x (n-2) system for eta_2..eta_{n-1}, then recover omega."""
    D, th = as_fraction(Delta), as_fraction(theta)
    _check(n, D)
    m = n - 2
    A = [[Fraction(0)] * m for _ in range(m)]
    b = [Fraction(0)] * m
    for row, j in enumerate(range(2, n)):
        # eta_j - (1-beta_j)(j+1)/j eta_{j-1} - c_j sum_{k>=j} eta_k = c_j (Delta-n) theta
        c = 2 * D / (j * (D - j) * (D - j + 1))
        lead = (1 - beta(j, D)) * Fraction(j + 1, j)
        A[row][row] += 1
        if j - 1 >= 2:
            A[row][row - 1] -= lead
        else:
            b[row] += lead * 2
        for k in range(j, n):
            A[row][k - 2] -= c
        b[row] += c * (D - n) * th
    etas = [Fraction(2)] + gauss_solve(A, b)
    tail = Fraction(0)
    omegas = [Fraction(0)] * (n - 1)
    for j in range(n - 1, 0, -1):
        tail += etas[j - 1]
        omegas[j - 1] = (tail + (D - n) * th) / (D - j)
    return SystemSolution(n, D, th, tuple(omegas) + (th,), tuple(etas))


def solve_full(n: int, Delta, theta) -> SystemSolution:
    """Solve for omega_1..omega_{n-1}, eta_1..eta_{n-1} as one linear system."""
    D, th = as_fraction(Delta), as_fraction(theta)
    _check(n, D)
    size = 2 * (n - 1)
    w = lambda j: j - 1                 # column of omega_j, 1 <= j <= n-1
    e = lambda j: (n - 1) + j - 1       # column of eta_j, 1 <= j <= n-1
    A, b = [], []
    row = [Fraction(0)] * size
    row[e(1)] = Fraction(1)
    A.append(row)
    b.append(Fraction(2))
    for j in range(1, n):
        row = [Fraction(0)] * size
        a = alpha(j, D)
        row[w(j)] += 1
        row[e(j)] -= 1 - a
        rhs = Fraction(0)
        if j + 1 < n:
            row[w(j + 1)] -= a
        else:
            rhs = a * th
        A.append(row)
        b.append(rhs)
    for j in range(2, n):
        row = [Fraction(0)] * size
        bj, f = beta(j, D), Fraction(j + 1, j)
        row[e(j)] += 1
        row[e(j - 1)] -= (1 - bj) * f
        row[w(j)] -= bj * f
        A.append(row)
        b.append(Fraction(0))
    x = gauss_solve(A, b)
    return SystemSolution(n, D, th, tuple(x[:n - 1]) + (th,), tuple(x[n - 1:]))


def residuals(sol: SystemSolution) -> list:
    """Left minus right side of every equation of the system; exact zeros expected."""
    n, D = sol.n, sol.Delta
    om, et = sol.omega, sol.eta
    out = [et[0] - 2, om[n - 1] - sol.theta]
    for j in range(1, n):
        a = alpha(j, D)
        out.append(om[j - 1] - ((1 - a) * et[j - 1] + a * om[j]))
    for j in range(2, n):
        bj, f = beta(j, D), Fraction(j + 1, j)
        out.append(et[j - 1] - ((1 - bj) * f * et[j - 2] + bj * f * om[j - 1]))
    return out


def solve_system(n: int, Delta, theta) -> SystemSolution:
    """Solve by both routes and insist they agree exactly."""
    red = solve_reduced(n, Delta, theta)
    full = solve_full(n, Delta, theta)
    if red != full:
        raise VinolabError(f"solver routes disagree at n={n}, Delta={Delta}, theta={theta}")
    return red


def omega1_affine(n: int, Delta) -> tuple:
    """(A, B) with omega_1(Delta, theta) = A + B theta, checked at a third theta."""
    D = as_fraction(Delta)
    A = solve_system(n, D, 0).omega1
    B = solve_system(n, D, 1).omega1 - A
    probe = Fraction(-7, 3)
    if solve_system(n, D, probe).omega1 != A + B * probe:
        raise NonAffine(f"omega_1 is not affine in theta at n={n}, Delta={D}")
    return A, B


def verify_threshold(n: int, Delta) -> tuple:
    """(omega_1(Delta, 0) > 1, omega_1(Delta, 0) - 1) in exact arithmetic."""
    margin = solve_system(n, Delta, 0).omega1 - 1
    return margin > 0, margin


def omega1_closed_form_n3(p) -> Fraction:
    """omega_1 for n = 3 written in terms of p = 3 Delta."""
    p = as_fraction(p)
    return 9 / (p - 3) * (1 + (12 - p) / (p * p - 12 * p + 18))


def iterate_coefficients(n: int, Delta, rounds: int) -> list:
    """Coefficients (A_r, B_r) of omega_1 after r rounds of substituting the
    equations into themselves, starting from all unknowns at zero.

    Each unknown is carried as an affine function a + b theta of theta; the
    remaining unknowns are frozen at zero, so A_r, B_r are the parts already
    resolved.  Floating point, for watching convergence only.
    """
    if n < 3:
        raise DimensionTooSmall(f"n = {n} < 3")
    D = float(as_fraction(Delta))
    al = {j: (D - j - 1) / (D - j) for j in range(1, n)}
    be = {j: 2 * D / ((j + 1) * (D - j + 1)) for j in range(2, n)}
    om = {j: (0.0, 0.0) for j in range(1, n)}
    om[n] = (0.0, 1.0)
    et = {j: (0.0, 0.0) for j in range(2, n)}
    et[1] = (2.0, 0.0)
    out = []
    lin = lambda u, v, a, b: (a * u[0] + b * v[0], a * u[1] + b * v[1])
    for _ in range(rounds):
        new_om = {j: lin(et[j], om[j + 1], 1 - al[j], al[j]) for j in range(1, n)}
        new_et = {j: lin(et[j - 1], om[j], (1 - be[j]) * (j + 1) / j, be[j] * (j + 1) / j)
                  for j in range(2, n)}
        om.update(new_om)
        et.update(new_et)
        out.append(om[1])
    return out


def empirical_threshold(n: int, *, step=Fraction(1, 64), iterations: int = 40) -> tuple:
    """Bracket ``(lo, hi)`` around the Delta* below which omega_1(Delta, 0) <= 1.

    Scans down from n+1 in ``step`` increments until the margin stops being
    positive, then bisects.  The sign change found this way is a pole of the
    system (omega_1 runs to +infinity from the right), not a zero.
    """
    step = as_fraction(step)
    hi = Fraction(n + 1) - step
    if not verify_threshold(n, hi)[0]:
        raise VinolabError(f"margin not positive at {hi}")

    def positive(d):
        try:
            return verify_threshold(n, d)[0]
        except SingularSystem:
            return False

    lo = hi - step
    while positive(lo):
        hi, lo = lo, lo - step
        if lo <= 1:
            raise VinolabError("no sign change found above Delta = 1")
    for _ in range(iterations):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if positive(mid) else (mid, hi)
    return lo, hi
