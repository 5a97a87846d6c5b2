"""Holder-continuous background -sgn(x)|sin x|^alpha and its residual bounds.

The background is never expanded in sines (its coefficients decay like
k^(-1-alpha)); every quantity is sampled from closed forms on the shifted
grid, and the velocity is obtained by graded quadrature of

    u(x) = int_0^x (x - y) omega(y) dy + x u_x(0),
    u_x(0) = (1/pi) int_0^pi (pi - y) |sin y|^alpha dy   (for omega = -|sin|^alpha).

Near x = 0 the terms (alpha-1) omega_x and sin(x) omega_res,xx both behave
like |x|^(alpha-1) with opposite signs; ``canceled_combination`` evaluates
their sum from a closed form in which the cancellation has been carried
out analytically.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedParameterError
from .spectral import Grid

__all__ = [
    "KAPPA", "HolderProfile", "boole", "graded_breakpoints", "graded_integral",
    "cumulative_graded", "holder_u_x0", "build_holder_profile", "background_derivatives",
    "canceled_combination", "canceled_combination_dx", "verify_residual_lemma",
    "cusp_check", "ratio_stability",
]

KAPPA = 7.0 / 8.0
DEFAULT_PANELS = 16
DEFAULT_LEVELS = 60


def _check_alpha(alpha, allow_one=True):
    hi_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (KAPPA < alpha and hi_ok):
        raise UnsupportedParameterError(
            f"alpha must lie in (7/8, 1{']' if allow_one else ')'}, got {alpha}")


# ---------------------------------------------------------------------------
# graded closed Newton-Cotes quadrature
# ---------------------------------------------------------------------------

_BOOLE = np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * (2.0 / 45.0)


def boole(f, lo, hi, panels=DEFAULT_PANELS):
    """Composite Boole rule on each interval [lo_i, hi_i] with ``panels`` panels.

    ``lo`` and ``hi`` are arrays; ``f`` must accept a 2-D array.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = 4 * panels
    step = (hi - lo) / n
    nodes = lo[:, None] + step[:, None] * np.arange(n + 1)[None, :]
    w = np.zeros(n + 1)
    for p in range(panels):
        w[4 * p: 4 * p + 5] += _BOOLE
    return step * (f(nodes) @ w)


def graded_breakpoints(lo, hi, levels=DEFAULT_LEVELS, uniform=64, extra=()):
    """Breakpoints on [lo, hi] graded dyadically toward both ends.

    Every interval not touching an end is no longer than its distance to the
    nearer end, which keeps the per-cell rule accurate for |y|^alpha-type
    endpoint behaviour.  ``extra`` points are inserted as additional breaks.
    """
    width = hi - lo
    half = 0.5 * width
    geo = half * 2.0 ** -np.arange(1, levels + 1)
    pts = np.concatenate([
        [lo, hi], lo + geo, hi - geo,
        lo + width * np.arange(1, uniform) / uniform,
        np.asarray(extra, dtype=float),
    ])
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    return pts


def graded_integral(f, lo, hi, panels=DEFAULT_PANELS, levels=DEFAULT_LEVELS):
    bp = graded_breakpoints(lo, hi, levels)
    return float(np.sum(boole(f, bp[:-1], bp[1:], panels)))


def cumulative_graded(f, points, lo=0.0, hi=np.pi, panels=DEFAULT_PANELS,
                      levels=DEFAULT_LEVELS):
    """int_lo^x f for every x in ``points`` (all inside [lo, hi])."""
    points = np.asarray(points, dtype=float)
    bp = graded_breakpoints(lo, hi, levels, extra=points)
    cells = boole(f, bp[:-1], bp[1:], panels)
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    idx = np.searchsorted(bp, points)
    return cum[idx]


def _sin_pow(alpha):
    return lambda y: np.abs(np.sin(y)) ** alpha


def holder_u_x0(alpha, panels=DEFAULT_PANELS, levels=DEFAULT_LEVELS):
    """u_x(0) of the background: (1/pi) int_0^pi (pi - y) sin(y)^alpha dy."""
    return graded_integral(lambda y: (np.pi - y) * np.abs(np.sin(y)) ** alpha,
                           0.0, np.pi, panels, levels) / np.pi


# ---------------------------------------------------------------------------
# closed forms on (0, pi)
# ---------------------------------------------------------------------------

def background_derivatives(x, alpha):
    """omega, omega_x, omega_xx, omega_xxx of -|sin x|^alpha at 0 < x < pi."""
    s = np.sin(x)
    co = np.cos(x)
    a = alpha
    w0 = -s**a
    w1 = -a * s ** (a - 1) * co
    w2 = -a * (a - 1) * s ** (a - 2) * co**2 + a * s**a
    w3 = (-a * (a - 1) * (a - 2) * s ** (a - 3) * co**3
          + 2 * a * (a - 1) * s ** (a - 1) * co + a * a * s ** (a - 1) * co)
    return w0, w1, w2, w3


def _one_minus_cos(x):
    return 2.0 * np.sin(0.5 * x) ** 2


def canceled_combination(x, alpha):
    """(alpha-1) omega_x - sin(x) omega_res,xx at 0 < x < pi, cancellation done analytically.

    = -alpha(alpha-1) s^(alpha-1) cos (1 - cos) + s^2 - alpha s^(alpha+1).
    """
    s = np.sin(x)
    co = np.cos(x)
    a = alpha
    return -a * (a - 1) * s ** (a - 1) * co * _one_minus_cos(x) + s * s - a * s ** (a + 1)


def canceled_combination_dx(x, alpha):
    """x-derivative of ``canceled_combination`` at 0 < x < pi."""
    s = np.sin(x)
    co = np.cos(x)
    a = alpha
    omc = _one_minus_cos(x)
    return (a * (a - 1) * (-(a - 1) * s ** (a - 2) * co * co * omc + s**a * (1 - 2 * co))
            - a * (a + 1) * s**a * co + 2 * s * co)


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HolderProfile:
    """Samples of the Holder background on a shifted grid.

    ``half`` maps names to positive-half samples; ``samples(name)`` returns
    the full-grid (odd or even) extension.
    """

    alpha: float
    grid: Grid
    u_alpha_x0: float
    c_bar: float
    half: dict = field(repr=False)

    _EVEN = ("omega_x", "omega_xxx", "u_x", "omega_res_x", "u_res_x", "cos")

    def samples(self, name):
        vals = self.half[name]
        if name in self._EVEN:
            return self.grid.even_extend(vals)
        return self.grid.odd_extend(vals)

    def to_csv(self, path):
        names = ["omega", "omega_x", "omega_xx", "u", "u_x", "omega_res", "u_res", "F"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + names)
            cols = [self.samples(n) for n in names]
            for i, x in enumerate(self.grid.points):
                w.writerow([repr(float(x))] + [repr(float(c[i])) for c in cols])


def build_holder_profile(alpha, grid=None, panels=DEFAULT_PANELS, levels=DEFAULT_LEVELS):
    """Sample -sgn(x)|sin x|^alpha, its velocity and residuals on ``grid``."""
    _check_alpha(alpha)
    grid = grid or Grid.for_modes(256)
    x = grid.half_points
    s, co = np.sin(x), np.cos(x)
    w0, w1, w2, w3 = background_derivatives(x, alpha)
    ux0 = holder_u_x0(alpha, panels, levels)
    s0 = cumulative_graded(_sin_pow(alpha), x, panels=panels, levels=levels)
    s1 = cumulative_graded(lambda y: y * np.abs(np.sin(y)) ** alpha, x,
                           panels=panels, levels=levels)
    u = -(x * s0 - s1) + x * ux0
    ux = ux0 - s0
    c_bar = (alpha - 1.0) * ux0
    half = {
        "sin": s, "cos": co,
        "omega": w0, "omega_x": w1, "omega_xx": w2, "omega_xxx": w3,
        "u": u, "u_x": ux,
        "omega_res": w0 + s, "omega_res_x": w1 + co, "omega_res_xx": w2 - s,
        "u_res": u - s, "u_res_x": ux - co,
        "F": w0 * ux - u * w1 + c_bar * w0,
    }
    return HolderProfile(float(alpha), grid, float(ux0), float(c_bar), half)


# ---------------------------------------------------------------------------
# residual lemma checks
# ---------------------------------------------------------------------------

def verify_residual_lemma(alpha, grid=None):
    """Grid suprema of (left side)/(right side) for the residual bounds.

    Keys: ``omega_res_i`` (|d^i omega_res| vs |alpha-1||sin x|^(kappa-i)),
    ``psi_res_i`` (|d^i u_res| + |d^i u_res,x| vs |alpha-1|) and
    ``cancellation`` (|K| + |sin(x) K_x| vs min{|alpha-1|, x^2}|sin x|^(alpha-1)),
    for i = 0, 1, 2.
    """
    _check_alpha(alpha, allow_one=False)
    prof = build_holder_profile(alpha, grid)
    h = prof.half
    x = prof.grid.half_points
    s = h["sin"]
    eps = abs(alpha - 1.0)
    out = {}
    res = [h["omega_res"], h["omega_res_x"], h["omega_res_xx"]]
    for i, r in enumerate(res):
        out[f"omega_res_{i}"] = float(np.max(np.abs(r) / (eps * s ** (KAPPA - i))))
    psi = [h["u_res"], h["u_res_x"], h["omega_res"], h["omega_res_x"]]
    for i in range(3):
        out[f"psi_res_{i}"] = float(np.max((np.abs(psi[i]) + np.abs(psi[i + 1])) / eps))
    k = canceled_combination(x, alpha)
    kx = canceled_combination_dx(x, alpha)
    rhs = np.minimum(eps, x * x) * s ** (alpha - 1.0)
    out["cancellation"] = float(np.max((np.abs(k) + np.abs(s * kx)) / rhs))
    return out


def ratio_stability(alpha, grid=None):
    """Ratios at alpha and at (1+alpha)/2, and their quotient per key."""
    r1 = verify_residual_lemma(alpha, grid)
    r2 = verify_residual_lemma(0.5 * (1.0 + alpha), grid)
    return {k: (r1[k], r2[k], r2[k] / r1[k]) for k in r1}


def cusp_check(alpha, radius=1e-3, smallest=1e-12, count=200):
    """Behaviour of the canceled combination on geometric points 0 < x <= radius.

    Returns the sup of |K| + |sin(x) K_x| next to the sups of the divergent
    pieces it is assembled from: omega_res,xx, (alpha-1) omega_xx and
    d/dx(sin(x) omega_res,xx).
    """
    _check_alpha(alpha, allow_one=False)
    x = np.geomspace(smallest, radius, count)
    s, co = np.sin(x), np.cos(x)
    _, w1, w2, w3 = background_derivatives(x, alpha)
    res_xx = w2 - s
    res_xxx = w3 - co
    k = canceled_combination(x, alpha)
    kx = canceled_combination_dx(x, alpha)
    return {
        "combination_sup": float(np.max(np.abs(k) + np.abs(s * kx))),
        "bound_ratio_sup": float(np.max((np.abs(k) + np.abs(s * kx))
                                        / (np.minimum(abs(alpha - 1), x * x)
                                           * s ** (alpha - 1)))),
        "omega_res_xx_sup": float(np.max(np.abs(res_xx))),
        "stretch_term_dx_sup": float(np.max(np.abs((alpha - 1) * w2))),
        "sin_res_xx_dx_sup": float(np.max(np.abs(co * res_xx + s * res_xxx))),
        "points": count, "radius": radius, "smallest": smallest,
    }
