"""Singular-weight norms, the orthonormal tilde basis and the composite energies.

The weight ``rho(x) = 1 / (4 pi sin^2(x/2))`` defines

    ||f||_H^2 = int f_x^2 rho dx,

finite for odd f with f_x(0) = 0.  The functions

    e~_k = sin((k+1) x)/(k+1) - sin(k x)/k,   k >= 1,

are orthonormal for this inner product, so every H computation here runs on
tilde coefficients; grid quadrature is provided only as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NotInHError, UsageError
from .spectral import OddField, cosine_synth, recover_velocity, sine_synth

__all__ = [
    "TildeCoeffs", "WeightSpec", "EnergyConfig",
    "rho", "rho_k", "cos2_half", "tilde_basis",
    "sine_to_tilde", "tilde_to_sine", "to_tilde", "from_tilde",
    "h_inner", "h_norm", "h_norm_coeffs", "h_inner_quadrature", "w_value",
    "dx_weighted", "dx_weighted_coeffs", "ek_norm", "ek_norm_coeffs",
    "energy_E", "energy_E_coeffs", "energy_I", "energy_I_coeffs",
    "weighted_identity_defect", "embedding_constants", "equivalence_constants",
]

H_COMPAT_RTOL = 1e-9
# absolute floor so that differences of nearly equal fields are not rejected on rounding
H_COMPAT_ATOL = 1e-13


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def rho(x):
    return 1.0 / (4.0 * np.pi * np.sin(0.5 * np.asarray(x)) ** 2)


def rho_k(x, k):
    return (1.0 + np.cos(x)) ** k


def cos2_half(x):
    return np.cos(0.5 * np.asarray(x)) ** 2


@dataclass(frozen=True)
class WeightSpec:
    """One of the three weights: ``rho``, ``rho_k`` (with order ``k``) or ``cos2_half``."""

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("rho", "rho_k", "cos2_half"):
            raise ConfigurationError(f"unknown weight kind {self.kind!r}")
        if self.kind == "rho_k" and self.k < 0:
            raise ConfigurationError(f"rho_k order must be >= 0, got {self.k}")

    def __call__(self, x):
        if self.kind == "rho":
            return rho(x)
        if self.kind == "rho_k":
            return rho_k(x, self.k)
        return cos2_half(x)


@dataclass(frozen=True)
class EnergyConfig:
    """Constants of the blended energies.

    ``mu`` weighs the H norm inside E, ``mu1`` is the geometric weight of the
    higher-order sum I, and ``k0`` its top order.
    """

    mu: float = 2.0
    mu1: float = 0.1
    k0: int = 4

    def __post_init__(self):
        if not self.mu > 1.0:
            raise ConfigurationError(f"mu must exceed 1, got {self.mu}")
        if not 0.0 < self.mu1 < 1.0:
            raise ConfigurationError(f"mu1 must lie in (0, 1), got {self.mu1}")
        if int(self.k0) != self.k0 or self.k0 < 4:
            raise ConfigurationError(f"k0 must be an integer >= 4, got {self.k0}")


# ---------------------------------------------------------------------------
# tilde basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TildeCoeffs:
    """Coefficients c_1..c_K of f = sum c_k e~_k (``coeffs[k-1] = c_k``)."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float).copy())
        self.coeffs.setflags(write=False)

    def __len__(self):
        return len(self.coeffs)

    def norm_squared(self):
        return float(self.coeffs @ self.coeffs)

    @classmethod
    def unit(cls, k, size):
        c = np.zeros(size)
        c[k - 1] = 1.0
        return cls(c)


def _slope_check(a):
    m = np.arange(1, len(a) + 1)
    slope = float(np.sum(m * a))
    scale = float(np.sum(np.abs(m * a)))
    if abs(slope) > H_COMPAT_RTOL * scale + H_COMPAT_ATOL:
        raise NotInHError(slope)
    return slope


def sine_to_tilde(a, check=True):
    """Tilde coefficients from sine coefficients: c_m = c_{m-1} - m a_m.

    Returns c_1..c_N; the last entry equals -sum m a_m and vanishes for
    fields in H.
    """
    a = np.asarray(a, dtype=float)
    if check:
        _slope_check(a)
    m = np.arange(1, len(a) + 1)
    return -np.cumsum(m * a)


def tilde_to_sine(c):
    """Sine coefficients a_1..a_{K+1} of sum_{k<=K} c_k e~_k: a_m = (c_{m-1} - c_m)/m."""
    c = np.asarray(c, dtype=float)
    prev = np.concatenate([[0.0], c])
    cur = np.concatenate([c, [0.0]])
    return (prev - cur) / np.arange(1, len(c) + 2)


def tilde_basis(k, grid):
    """The field e~_k on ``grid`` (needs k + 1 <= N)."""
    if k < 1:
        raise UsageError(f"tilde basis index must be >= 1, got {k}")
    if k + 1 > grid.modes:
        raise ConfigurationError(f"e~_{k} needs {k + 1} modes, grid has {grid.modes}")
    a = np.zeros(grid.modes)
    a[k - 1] = -1.0 / k
    a[k] = 1.0 / (k + 1)
    return OddField(a, grid)


def to_tilde(f):
    """Tilde coefficients of an H-compatible odd field."""
    return TildeCoeffs(sine_to_tilde(f.coeffs))


def from_tilde(c, grid, tol=1e-12):
    """Odd field sum c_k e~_k on ``grid``.

    Modes beyond the grid's N are dropped only if they are below ``tol``
    relative to the field; otherwise the request is rejected.
    """
    coeffs = c.coeffs if isinstance(c, TildeCoeffs) else np.asarray(c, dtype=float)
    a = tilde_to_sine(coeffs)
    if len(a) > grid.modes:
        tail = a[grid.modes:]
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(tail)) > tol * scale:
            raise ConfigurationError(
                f"tilde vector of length {len(coeffs)} needs {len(a)} sine modes, "
                f"grid has {grid.modes}")
        a = a[: grid.modes]
    return OddField(a, grid)


# ---------------------------------------------------------------------------
# H and W
# ---------------------------------------------------------------------------

def h_norm_coeffs(a):
    c = sine_to_tilde(a)
    return float(np.sqrt(c @ c))


def h_inner(f, g):
    """<f, g>_H = sum c_k(f) c_k(g)."""
    return float(sine_to_tilde(f.coeffs) @ sine_to_tilde(g.coeffs))


def h_norm(f):
    return h_norm_coeffs(f.coeffs)


def h_inner_quadrature(f, g):
    """Trapezoid quadrature of int f_x g_x rho on the shifted grid."""
    _slope_check(f.coeffs)
    _slope_check(g.coeffs)
    x = f.grid.points
    return f.grid.integrate(f.derivative().samples() * g.derivative().samples() * rho(x))


def w_value(f):
    """||f||_H^2 + int f_xx^2 cos^2(x/2) dx (a squared quantity; no root is taken)."""
    grid = f.grid
    fxx = f.derivative(2).samples()
    return h_norm(f) ** 2 + grid.integrate(fxx**2 * cos2_half(grid.points))


# ---------------------------------------------------------------------------
# weighted derivative and energies
# ---------------------------------------------------------------------------

def dx_weighted_coeffs(a):
    """Exact sine coefficients d_1..d_{N+1} of sin(x) f_x.

    sin(x) * m a_m cos(m x) = m a_m (sin((m+1)x) - sin((m-1)x)) / 2.
    """
    a = np.asarray(a, dtype=float)
    n = len(a)
    ma = np.arange(1, n + 1) * a
    d = np.zeros(n + 1)
    d[1:] += 0.5 * ma           # mode m+1
    d[: n - 1] -= 0.5 * ma[1:]  # mode m-1 (m >= 2)
    return d


def dx_weighted(f):
    """D_x f = sin(x) f_x, truncated to the grid's N modes."""
    return OddField(dx_weighted_coeffs(f.coeffs)[: f.grid.modes], f.grid)


def ek_norm_coeffs(a, k, grid):
    """E_k of the odd field with sine coefficients ``a`` (may exceed grid.modes by a few)."""
    if int(k) != k or k < 0:
        raise UsageError(f"E_k order must be a non-negative integer, got {k}")
    a = np.asarray(a, dtype=float)
    if k == 0:
        return h_norm_coeffs(a)
    m = np.arange(1, len(a) + 1, dtype=float)
    x = grid.points
    # derivative of order k+1 of sin(m x) is m^{k+1} times sin or cos
    amp = m ** (k + 1) * a
    phase = (k + 1) % 4
    trig = np.sin if phase % 2 == 0 else np.cos
    sign = 1.0 if phase in (0, 1) else -1.0
    if len(a) < grid.half:
        half = sine_synth(amp, grid.half) if trig is np.sin else cosine_synth(
            np.concatenate([[0.0], amp]), grid.half)
        vals = sign * grid.even_extend(half)  # parity irrelevant under the square
    else:
        vals = sign * (trig(np.multiply.outer(x, m)) @ amp)
    return float(np.sqrt(grid.integrate(vals**2 * rho_k(x, k))))


def ek_norm(f, k):
    """E_k^2 = int (f^(k+1))^2 (1 + cos x)^k dx for k >= 1; E_0 = ||f||_H."""
    return ek_norm_coeffs(f.coeffs, k, f.grid)


def energy_E_coeffs(a, mu):
    d = dx_weighted_coeffs(a)
    return float(np.sqrt(h_norm_coeffs(d) ** 2 + mu * h_norm_coeffs(a) ** 2))


def energy_E(f, cfg=EnergyConfig()):
    """E^2 = ||d_x(D_x f) rho^{1/2}||^2 + mu ||f||_H^2.

    The first term equals ||D_x f||_H^2 and is computed from the exact
    N+1 mode coefficients of D_x f.
    """
    return energy_E_coeffs(f.coeffs, cfg.mu)


def energy_I_coeffs(a, grid, mu1, k0):
    total = 0.0
    for k in range(k0 + 1):
        total += mu1**k * ek_norm_coeffs(a, k, grid) ** 2
    return float(np.sqrt(total))


def energy_I(f, cfg=EnergyConfig(), k0=None):
    """I^2 = sum_{k=0}^{k0} mu1^k E_k^2; ``k0`` defaults to ``cfg.k0``."""
    k0 = cfg.k0 if k0 is None else int(k0)
    if k0 < 0:
        raise UsageError(f"k0 must be >= 0, got {k0}")
    return energy_I_coeffs(f.coeffs, f.grid, cfg.mu1, k0)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def weighted_identity_defect(f):
    """<sin(x) f_x, f rho> - 0.5 <f^2, rho> by grid quadrature (vanishes for f in H)."""
    _slope_check(f.coeffs)
    grid = f.grid
    x = grid.points
    vals = f.samples()
    lhs = grid.integrate(np.sin(x) * f.derivative().samples() * vals * rho(x))
    rhs = 0.5 * grid.integrate(vals**2 * rho(x))
    return lhs - rhs, lhs, rhs


def embedding_constants(f):
    """Ratios ||f rho^{1/2}||_inf / ||f||_H and ||u_x||_inf / ||f||_H for u_xx = f."""
    hn = h_norm(f)
    if hn == 0.0:
        raise UsageError("embedding constants are undefined for the zero field")
    x = f.grid.points
    sup_f = float(np.max(np.abs(f.samples()) * np.sqrt(rho(x))))
    ux = recover_velocity(f).u.derivative()
    return sup_f / hn, ux.sup() / hn


def equivalence_constants(fields, cfg=EnergyConfig()):
    """Smallest and largest E^2 / w_value over ``fields``."""
    ratios = [energy_E(f, cfg) ** 2 / w_value(f) for f in fields]
    return float(min(ratios)), float(max(ratios))
