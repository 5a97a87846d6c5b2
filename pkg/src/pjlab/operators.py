"""Linearization of the rescaled equation about omega = -sin(x).

In the tilde basis the a = 1 operator is tridiagonal,

    (L c)_k = -d_k c_{k-1} - (d_{k+1} - d_k) c_k + d_{k+1} c_{k+1},
    d_k = (k+1)^2 (k-1)^2 / (2 k^3),

with antisymmetric off-diagonal part, so <L c, c> = -sum (d_{k+1} - d_k) c_k^2.
The gap d_{k+1} - d_k exceeds 1/2 for every k >= 1; ``damping_audit``
checks this in exact integer arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NumericError, UsageError
from .spectral import Grid, OddField, multiply, recover_velocity
from .weighted import TildeCoeffs, sine_to_tilde, tilde_basis

__all__ = [
    "coeff_A", "coeff_B", "coeff_d", "coeff_A_exact", "coeff_B_exact", "coeff_d_exact",
    "margin_closed_form", "TridiagonalOperator", "OperatorReport", "damping_audit",
    "apply_L1_physical", "apply_A_physical", "apply_La", "rayleigh_L1",
    "tilde_matrix", "truncated_spectrum", "random_rayleigh_La", "La_matrix",
    "max_rayleigh_La",
]


def _require(k, lo):
    if int(k) != k or k < lo:
        raise UsageError(f"index must be an integer >= {lo}, got {k}")
    return int(k)


def coeff_A(k):
    """Coefficient of e_{k+1} in L1 e_k: -(k+1)(k-1)^2 / (2 k^2)."""
    k = _require(k, 2)
    return -(k + 1) * (k - 1) ** 2 / (2.0 * k * k)


def coeff_B(k):
    """Coefficient of e_{k-1} in L1 e_k: (k+1)^2 (k-1) / (2 k^2)."""
    k = _require(k, 2)
    return (k + 1) ** 2 * (k - 1) / (2.0 * k * k)


def coeff_d(k):
    k = _require(k, 1)
    return (k + 1) ** 2 * (k - 1) ** 2 / (2.0 * k**3)


def coeff_A_exact(k):
    k = _require(k, 2)
    return Fraction(-(k + 1) * (k - 1) ** 2, 2 * k * k)


def coeff_B_exact(k):
    k = _require(k, 2)
    return Fraction((k + 1) ** 2 * (k - 1), 2 * k * k)


def coeff_d_exact(k):
    k = _require(k, 1)
    return Fraction((k + 1) ** 2 * (k - 1) ** 2, 2 * k**3)


def margin_closed_form(k):
    """(2k^4 + 4k^3 - k^2 - 3k - 1) / (2 k^3 (k+1)^3), the excess of d_{k+1} - d_k over 1/2."""
    k = _require(k, 1)
    return Fraction(2 * k**4 + 4 * k**3 - k**2 - 3 * k - 1, 2 * k**3 * (k + 1) ** 3)


def d_array(size):
    """Floating d_1..d_size."""
    k = np.arange(1, size + 1, dtype=float)
    return (k + 1) ** 2 * (k - 1) ** 2 / (2.0 * k**3)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Truncation of L1 to c_1..c_N with the cut c_{N+1} = 0."""

    size: int
    d: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.size < 1:
            raise UsageError(f"operator size must be >= 1, got {self.size}")
        if self.d is None:
            object.__setattr__(self, "d", d_array(self.size + 1))
        self.d.setflags(write=False)

    def apply(self, c):
        v = c.coeffs if isinstance(c, TildeCoeffs) else np.asarray(c, dtype=float)
        if len(v) != self.size:
            raise UsageError(f"expected {self.size} tilde coefficients, got {len(v)}")
        d = self.d  # d[k-1] = d_k
        dk = d[: self.size]
        dk1 = d[1: self.size + 1]
        out = -(dk1 - dk) * v
        out[1:] -= dk[1:] * v[:-1]
        out[:-1] += dk1[:-1] * v[1:]
        return TildeCoeffs(out)

    def matrix(self):
        d = self.d
        n = self.size
        diag = -(d[1: n + 1] - d[:n])
        upper = d[1:n]       # row k, column k+1: d_{k+1}
        lower = -d[1:n]      # row k, column k-1: -d_k (k >= 2)
        return np.diag(diag) + np.diag(upper, 1) + np.diag(lower, -1)

    def quadratic_form(self, c):
        v = c.coeffs if isinstance(c, TildeCoeffs) else np.asarray(c, dtype=float)
        return float(self.apply(v).coeffs @ v)

    def diagonal_form(self, c):
        """-sum (d_{k+1} - d_k) c_k^2, the telescoped value of the quadratic form."""
        v = c.coeffs if isinstance(c, TildeCoeffs) else np.asarray(c, dtype=float)
        gap = self.d[1: self.size + 1] - self.d[: self.size]
        return -float(gap @ (v * v))


@dataclass(frozen=True)
class OperatorReport:
    """Outcome of the exact damping audit."""

    k_max: int
    max_rayleigh: float
    defect_table: list
    all_positive: bool
    closed_form_matches: bool
    failures: list

    @property
    def ok(self):
        return self.all_positive and self.closed_form_matches and not self.failures


def damping_audit(k_max, table_rows=10, corrupt=None):
    """Verify d_{k+1} - d_k - 1/2 > 0 and equals the closed form, exactly, for 1 <= k <= k_max.

    With d_k = P_k / (2 k^3), the margin is
    (P_{k+1} k^3 - P_k (k+1)^3 - k^3 (k+1)^3) / (2 k^3 (k+1)^3); the closed
    form shares that denominator, so equality reduces to an integer identity
    on numerators.  ``corrupt = (k, delta)`` adds ``delta`` to the numerator
    of d_k to provide a negative control.
    """
    k_max = _require(k_max, 1)

    def numer(k):
        p = (k + 1) ** 2 * (k - 1) ** 2
        if corrupt is not None and k == corrupt[0]:
            p += corrupt[1]
        return p

    failures = []
    table = []
    all_positive = True
    matches = True
    max_gap = None
    p_k = numer(1)
    for k in range(1, k_max + 1):
        p_next = numer(k + 1)
        k3 = k**3
        k13 = (k + 1) ** 3
        margin_num = p_next * k3 - p_k * k13 - k3 * k13
        closed_num = 2 * k**4 + 4 * k**3 - k**2 - 3 * k - 1
        if margin_num <= 0:
            all_positive = False
            failures.append((k, "margin not positive"))
        if margin_num != closed_num:
            matches = False
            failures.append((k, "margin differs from closed form"))
        if k <= table_rows or k == k_max:
            margin = Fraction(margin_num, 2 * k3 * k13)
            table.append((k, margin, float(margin)))
        gap = 0.5 + margin_num / (2.0 * k3 * k13)
        max_gap = gap if max_gap is None else min(max_gap, gap)
        p_k = p_next
    return OperatorReport(k_max, -max_gap, table, all_positive, matches, failures)


# ---------------------------------------------------------------------------
# physical-space operators
# ---------------------------------------------------------------------------

def _sin_cos(grid):
    sin = OddField(np.eye(1, grid.modes, 0).ravel(), grid)
    cos = sin.derivative()
    return sin, cos


def apply_L1_physical(f):
    """L1 f = -sin(x) f_x + cos(x) f - sin(x) u_x + cos(x) u with u_xx = f."""
    sin, cos = _sin_cos(f.grid)
    u = recover_velocity(f).u
    return (-multiply(sin, f.derivative()) + multiply(cos, f)
            - multiply(sin, u.derivative()) + multiply(cos, u))


def apply_A_physical(f):
    """A f = -u_x(0) sin(x) + f - cos(x) f + sin(x) u_x."""
    sin, cos = _sin_cos(f.grid)
    vel = recover_velocity(f)
    return (-vel.u_x0 * sin + f - multiply(cos, f) + multiply(sin, vel.u.derivative()))


def apply_La(f, a):
    """L_a f = L1 f + (1 - a) A f."""
    return apply_L1_physical(f) + (1.0 - a) * apply_A_physical(f)


def rayleigh_L1(c):
    """<L1 c, c> / <c, c> in tilde coordinates (always <= -1/2)."""
    v = c.coeffs if isinstance(c, TildeCoeffs) else np.asarray(c, dtype=float)
    norm2 = float(v @ v)
    if norm2 == 0.0:
        raise UsageError("Rayleigh quotient of the zero vector is undefined")
    return TridiagonalOperator(len(v)).quadratic_form(v) / norm2


def tilde_matrix(apply, n):
    """N x N tilde-basis matrix of a physical-space operator by column probes.

    Each e~_k (k <= N) is mapped through ``apply`` on a grid wide enough to
    hold the result exactly, projected to tilde coordinates and cut at N.
    """
    grid = Grid.for_modes(n + 3)
    cols = []
    for k in range(1, n + 1):
        image = apply(tilde_basis(k, grid))
        cols.append(sine_to_tilde(image.coeffs)[:n])
    return np.column_stack(cols)


def truncated_spectrum(a, n):
    """Eigenvalues of the N x N tilde truncation of L_a, each with its eigenpair residual."""
    n = _require(n, 4)
    if abs(1.0 - a) > 0.2:
        raise UsageError(f"|1 - a| must be <= 0.2, got a = {a}")
    mat = La_matrix(a, n)
    try:
        vals, vecs = np.linalg.eig(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed for N = {n}: {exc}", iterations=None) from exc
    defects = np.linalg.norm(mat @ vecs - vecs * vals, axis=0)
    order = np.argsort(-vals.real)
    return [(complex(vals[i]), float(defects[i])) for i in order]


def La_matrix(a, n):
    """N x N tilde-basis truncation of L_a = L1 + (1 - a) A."""
    mat = TridiagonalOperator(n).matrix()
    if a != 1.0:
        mat = mat + (1.0 - a) * tilde_matrix(apply_A_physical, n)
    return mat


def max_rayleigh_La(a, n):
    """sup over c of <L_a c, c> / <c, c> for the truncation.

    This is the top eigenvalue of the symmetric part.
    """
    mat = La_matrix(a, n)
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[-1])


def random_rayleigh_La(a, n, samples, rng):
    """Largest <L_a c, c> / <c, c> over random tilde vectors."""
    mat = La_matrix(a, n)
    worst = -np.inf
    for _ in range(samples):
        c = rng.standard_normal(n)
        worst = max(worst, float(c @ mat @ c) / float(c @ c))
    return worst
