"""Odd/even trigonometric fields on a half-cell shifted periodic grid.

An odd 2*pi-periodic function is stored by its sine coefficients
``a_1..a_N`` (``f = sum a_m sin(m x)``); an even one by ``b_0..b_N``
(``g = b_0 + sum b_m cos(m x)``).  Collocation uses the grid

    x_j = -pi + (j + 1/2) * 2*pi / M,   j = 0..M-1,

which never touches 0 or +-pi.  Because of the parity, only the positive
half ``x_i = pi (i + 1/2) / L`` with ``L = M/2`` is needed, and the
transforms there are exactly the type-II/III discrete sine and cosine
transforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import ConfigurationError, ParityError, UsageError

__all__ = [
    "Grid", "OddField", "EvenField", "VelocityPair",
    "analyze", "analyze_even", "differentiate", "multiply", "recover_velocity",
    "eval_derivative_at_zero", "sine_synth", "sine_analyze", "cosine_synth",
    "cosine_analyze", "default_grid_size",
]

PARITY_TOL = 1e-10


def default_grid_size(modes):
    """Smallest even M with M > 3*modes.

    With ``M = 3N`` exactly, mode 2N of a quadratic product aliases onto
    mode N, so the default keeps one extra pair of points.
    """
    return 2 * (3 * modes // 2 + 1)


@dataclass(frozen=True)
class Grid:
    """Shifted uniform collocation grid carrying the truncation level N."""

    modes: int
    size: int

    def __post_init__(self):
        if self.modes < 1:
            raise ConfigurationError(f"modes must be >= 1, got {self.modes}")
        if self.size % 2:
            raise ConfigurationError(f"grid size must be even, got {self.size}")
        if self.size < 3 * self.modes:
            raise ConfigurationError(
                f"grid size {self.size} < 3*modes = {3 * self.modes}; products would alias")

    @classmethod
    def for_modes(cls, modes, size=None):
        return cls(int(modes), int(size) if size is not None else default_grid_size(int(modes)))

    @property
    def half(self):
        return self.size // 2

    @cached_property
    def points(self):
        j = np.arange(self.size)
        return -np.pi + (j + 0.5) * 2.0 * np.pi / self.size

    @cached_property
    def half_points(self):
        """Positive abscissae pi (i + 1/2) / L, i = 0..L-1."""
        return np.pi * (np.arange(self.half) + 0.5) / self.half

    @property
    def spacing(self):
        return 2.0 * np.pi / self.size

    def odd_extend(self, half_values):
        """Full-grid samples of an odd function from its positive-half samples."""
        return np.concatenate([-half_values[::-1], half_values])

    def even_extend(self, half_values):
        return np.concatenate([half_values[::-1], half_values])

    def positive_half(self, samples):
        return np.asarray(samples)[self.half:]

    def integrate(self, samples):
        """Trapezoid rule over one period (exact for trigonometric polynomials of degree < M)."""
        return self.spacing * float(np.sum(samples))


# ---------------------------------------------------------------------------
# array-level transforms on the positive half grid
# ---------------------------------------------------------------------------

def _padded(coeffs, length):
    out = np.zeros(length)
    n = min(len(coeffs), length)
    out[:n] = coeffs[:n]
    return out


def sine_synth(a, half):
    """Values of sum a_m sin(m x) at the ``half`` positive grid points."""
    if len(a) >= half:
        raise ConfigurationError(f"{len(a)} sine modes do not fit a half grid of {half}")
    return fft.dst(_padded(a, half) * 0.5, type=3)


def sine_analyze(values, modes):
    """Sine coefficients a_1..a_modes of the interpolant of positive-half samples."""
    half = len(values)
    return fft.dst(values, type=2)[:modes] / half


def cosine_synth(b, half):
    """Values of b_0 + sum b_m cos(m x) at the positive grid points."""
    if len(b) > half:
        raise ConfigurationError(f"{len(b) - 1} cosine modes do not fit a half grid of {half}")
    x = _padded(b, half) * 0.5
    x[0] = b[0] if len(b) else 0.0
    return fft.dct(x, type=3)


def cosine_analyze(values, modes):
    """Cosine coefficients b_0..b_modes of the interpolant of positive-half samples."""
    half = len(values)
    y = fft.dct(values, type=2)[: modes + 1] / half
    y[0] *= 0.5
    return y


# ---------------------------------------------------------------------------
# field types
# ---------------------------------------------------------------------------

def _as_coeffs(coeffs, length):
    arr = np.asarray(coeffs, dtype=float)
    if arr.ndim != 1:
        raise UsageError("coefficients must be a 1-D array")
    if len(arr) > length:
        raise ConfigurationError(f"{len(arr)} coefficients exceed the {length} slots of the grid")
    return _padded(arr, length)


class _Field:
    coeffs: np.ndarray
    grid: Grid

    def _check(self, other):
        if other.grid != self.grid:
            raise ConfigurationError(f"grid mismatch: {self.grid} vs {other.grid}")

    @property
    def modes(self):
        return self.grid.modes

    def __add__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        self._check(other)
        return type(self)(self.coeffs + other.coeffs, self.grid)

    def __sub__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        self._check(other)
        return type(self)(self.coeffs - other.coeffs, self.grid)

    def __neg__(self):
        return type(self)(-self.coeffs, self.grid)

    def __mul__(self, scalar):
        if isinstance(scalar, _Field):
            return multiply(self, scalar)
        return type(self)(self.coeffs * float(scalar), self.grid)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return type(self)(self.coeffs / float(scalar), self.grid)

    def sup(self):
        return float(np.max(np.abs(self.half_samples())))


@dataclass(frozen=True, eq=False)
class OddField(_Field):
    """Odd field sum_{m=1}^{N} a_m sin(m x); ``coeffs[m-1] = a_m``."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs, self.grid.modes))
        self.coeffs.setflags(write=False)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.modes), grid)

    @classmethod
    def from_function(cls, func, grid):
        """Analyze ``func`` sampled on the grid (parity is checked)."""
        return analyze(func(grid.points), grid)

    @property
    def wavenumbers(self):
        return np.arange(1, self.grid.modes + 1)

    def half_samples(self):
        return sine_synth(self.coeffs, self.grid.half)

    def samples(self):
        return self.grid.odd_extend(self.half_samples())

    def evaluate(self, x):
        """Direct summation at arbitrary points (no grid)."""
        x = np.asarray(x, dtype=float)
        return np.sin(np.multiply.outer(x, self.wavenumbers)) @ self.coeffs

    def derivative(self, order=1):
        return differentiate(self, order)

    def slope_at_zero(self):
        return eval_derivative_at_zero(self, 1)


@dataclass(frozen=True, eq=False)
class EvenField(_Field):
    """Even field b_0 + sum_{m=1}^{N} b_m cos(m x); ``coeffs[m] = b_m``."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs, self.grid.modes + 1))
        self.coeffs.setflags(write=False)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.modes + 1), grid)

    @classmethod
    def from_function(cls, func, grid):
        return analyze_even(func(grid.points), grid)

    @property
    def wavenumbers(self):
        return np.arange(0, self.grid.modes + 1)

    def half_samples(self):
        return cosine_synth(self.coeffs, self.grid.half)

    def samples(self):
        return self.grid.even_extend(self.half_samples())

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.cos(np.multiply.outer(x, self.wavenumbers)) @ self.coeffs

    def derivative(self, order=1):
        return differentiate(self, order)


@dataclass(frozen=True)
class VelocityPair:
    """Velocity u with u_xx = omega, plus its slope at the origin."""

    u: OddField
    u_x0: float


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _check_size(samples, grid):
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (grid.size,):
        raise ConfigurationError(f"expected {grid.size} samples, got shape {samples.shape}")
    return samples


def analyze(samples, grid):
    """Sine coefficients of odd samples on the full grid, truncated to N modes."""
    samples = _check_size(samples, grid)
    pos = samples[grid.half:]
    neg = samples[: grid.half][::-1]
    scale = max(1.0, float(np.max(np.abs(samples))) if samples.size else 0.0)
    defect = float(np.max(np.abs(pos + neg))) if samples.size else 0.0
    if defect > PARITY_TOL * scale:
        raise ParityError(f"samples are not odd: max |f(x) + f(-x)| = {defect:.3e}")
    return OddField(sine_analyze(0.5 * (pos - neg), grid.modes), grid)


def analyze_even(samples, grid):
    """Cosine coefficients of even samples on the full grid, truncated to N modes."""
    samples = _check_size(samples, grid)
    pos = samples[grid.half:]
    neg = samples[: grid.half][::-1]
    scale = max(1.0, float(np.max(np.abs(samples))) if samples.size else 0.0)
    defect = float(np.max(np.abs(pos - neg))) if samples.size else 0.0
    if defect > PARITY_TOL * scale:
        raise ParityError(f"samples are not even: max |f(x) - f(-x)| = {defect:.3e}")
    return EvenField(cosine_analyze(0.5 * (pos + neg), grid.modes), grid)


def differentiate(f, order=1):
    """Termwise derivative; parity alternates with each order."""
    if order < 0:
        raise UsageError(f"derivative order must be >= 0, got {order}")
    out = f
    for _ in range(order):
        if isinstance(out, OddField):
            m = out.wavenumbers
            out = EvenField(np.concatenate([[0.0], m * out.coeffs]), out.grid)
        else:
            m = out.wavenumbers[1:]
            out = OddField(-m * out.coeffs[1:], out.grid)
    return out


def multiply(f, g):
    """Pointwise product truncated to N modes; parity is the product of parities."""
    if f.grid != g.grid:
        raise ConfigurationError(f"grid mismatch: {f.grid} vs {g.grid}")
    grid = f.grid
    values = f.half_samples() * g.half_samples()
    if isinstance(f, OddField) == isinstance(g, OddField):
        return EvenField(cosine_analyze(values, grid.modes), grid)
    return OddField(sine_analyze(values, grid.modes), grid)


def velocity_coeffs(a):
    """Sine coefficients of u with u_xx = omega, and u_x(0), for omega coefficients ``a``."""
    m = np.arange(1, len(a) + 1, dtype=float)
    return -a / m**2, -float(np.sum(a / m))


def recover_velocity(omega):
    """Solve u_xx = omega for odd periodic u; mode k of u is -a_k / k^2."""
    coeffs, u_x0 = velocity_coeffs(omega.coeffs)
    return VelocityPair(OddField(coeffs, omega.grid), u_x0)


def eval_derivative_at_zero(f, order):
    """omega_x(0) = sum m a_m (order 1) or omega_xxx(0) = -sum m^3 a_m (order 3)."""
    m = np.arange(1, len(f.coeffs) + 1, dtype=float)
    if order == 1:
        return float(np.sum(m * f.coeffs))
    if order == 3:
        return -float(np.sum(m**3 * f.coeffs))
    raise UsageError(f"derivative order at zero must be 1 or 3, got {order}")
