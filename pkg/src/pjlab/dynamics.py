"""Time integration in physical and dynamically rescaled variables.

Rescaled variables: omega~ = C(tau) omega, dC/dtau = c C, dt/dtau = C, and

    omega~_tau = -u~ omega~_x + a u~_x omega~ + c omega~  (+ nu C omega~_xx),

with c chosen so that omega~_x(0) is conserved.

Truncation closure
------------------
The product terms are dealiased and truncated to N sine modes, then the
top retained mode is adjusted so that the slope at the origin of the
truncated term equals its exact value ((a - 1) u_x(0) omega_x(0) for the
quadratic term).  This is the H-orthogonal (tilde basis) Galerkin cut of
the nonlinearity: without it, profiles whose coefficients decay only
algebraically (they have a cusp at x = pi) lose O(1) of the slope identity
to truncation.  With it, c = (1 - a) u~_x(0) conserves omega~_x(0) to
rounding, and steady states of the rescaled system are exact self-similar
solutions of the truncated physical system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (ConfigurationError, DegenerateNormalizationError, NumericError,
                     UnsupportedParameterError, UsageError)
from .spectral import OddField, cosine_synth, sine_analyze, sine_synth
from .weighted import EnergyConfig, energy_E_coeffs, energy_I_coeffs, h_norm_coeffs

__all__ = [
    "Regime", "RescaledState", "PhysicalState", "DiagnosticsRecord", "BlowupVerdict",
    "RunResult", "SpectralKernel", "rhs_rescaled_inviscid", "rhs_rescaled_viscous",
    "rhs_rescaled_holder", "tau_derivative", "rhs_physical", "diffusion_substep", "step",
    "cfl_limit",
    "evolve_rescaled", "evolve_physical", "detect_blowup", "diagnostics",
    "SERIES_COLUMNS", "DRIFT_TOL", "DEGENERATE_SLOPE", "flatness", "renormalize",
    "kernel_for",
]

MODES = ("inviscid", "viscous", "holder")
KAPPA = 7.0 / 8.0
DRIFT_TOL = 1e-8
DEGENERATE_SLOPE = 1e-3
CFL_NUMBER = 0.5
# RK4 is stable on the negative real axis up to about 2.78
DIFFUSION_NUMBER = 2.5

SERIES_COLUMNS = ("tau", "t", "c_omega", "u_x0", "h_norm", "w_value", "E", "I4",
                  "sup_omega", "omega_x0_drift", "omega_xxx0")


@dataclass(frozen=True)
class Regime:
    """Model parameters: stretching ``a``, viscosity ``nu``, Holder exponent ``alpha``."""

    a: float
    nu: float = 0.0
    alpha: float = 1.0
    mode: str = "inviscid"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.nu < 0:
            raise ConfigurationError(f"nu must be >= 0, got {self.nu}")
        if self.mode == "inviscid" and self.nu != 0:
            raise ConfigurationError("inviscid mode requires nu = 0")
        if self.mode == "holder":
            if self.nu != 0 or self.a != 1.0:
                raise ConfigurationError("holder mode is defined for a = 1, nu = 0")
            if not KAPPA < self.alpha <= 1.0:
                raise UnsupportedParameterError(
                    f"alpha must lie in (7/8, 1], got {self.alpha}")


@dataclass(frozen=True)
class RescaledState:
    """State of a dynamic-rescaling run.

    ``omega`` is the total field (inviscid/viscous) or the perturbation of the
    Holder background (holder mode).  ``C_omega`` is stored as its logarithm
    internally by the integrator; here it is the plain factor.
    """

    omega: OddField
    C_omega: float
    t_phys: float
    tau: float
    regime: Regime

    def __post_init__(self):
        if not self.C_omega > 0:
            raise ConfigurationError(f"C_omega must be positive, got {self.C_omega}")


@dataclass(frozen=True)
class PhysicalState:
    """State of a run of the unscaled equation; ``tau`` is the equivalent rescaled time."""

    omega: OddField
    t: float
    regime: Regime
    tau: float = 0.0


@dataclass(frozen=True)
class DiagnosticsRecord:
    tau: float
    t: float
    c_omega: float
    u_x0: float
    h_norm: float
    w_value: float
    E: float
    I4: float
    sup_omega: float
    omega_x0_drift: float
    omega_xxx0: float

    def as_row(self):
        return [getattr(self, name) for name in SERIES_COLUMNS]

    def is_finite(self):
        return all(math.isfinite(v) for v in self.as_row())


@dataclass(frozen=True)
class BlowupVerdict:
    kind: str
    T_estimate: float | None
    fit_r2: float
    slope: float = float("nan")
    flatness: float = float("nan")
    window: tuple = ()


@dataclass
class RunResult:
    state: object
    rows: list
    events: list = field(default_factory=list)
    steps: int = 0


# ---------------------------------------------------------------------------
# array kernel
# ---------------------------------------------------------------------------

class SpectralKernel:
    """Array-level evaluation of the quadratic term on one grid."""

    def __init__(self, grid):
        self.grid = grid
        self.N = grid.modes
        self.half = grid.half
        self.m = np.arange(1, self.N + 1, dtype=float)
        self.m2 = self.m**2
        self.m3 = self.m**3
        self._zero = np.zeros(1)

    def velocity(self, a):
        """(u samples, u_x samples, u_x(0)) on the positive half grid."""
        u = sine_synth(-a / self.m2, self.half)
        ux = cosine_synth(np.concatenate([self._zero, -a / self.m]), self.half)
        return u, ux, -float(np.sum(a / self.m))

    def slope(self, a):
        return float(self.m @ a)

    def third_at_zero(self, a):
        return -float(self.m3 @ a)

    def close_slope(self, coeffs, exact_slope):
        """Shift the top mode so that sum m*coeffs equals ``exact_slope``."""
        coeffs[-1] += (exact_slope - float(self.m @ coeffs)) / self.N
        return coeffs

    def quadratic(self, a, stretch):
        """Truncated -u w_x + stretch * u_x w with the slope closure; also returns u_x(0)."""
        w = sine_synth(a, self.half)
        wx = cosine_synth(np.concatenate([self._zero, self.m * a]), self.half)
        u, ux, ux0 = self.velocity(a)
        p = sine_analyze(-u * wx + stretch * ux * w, self.N)
        self.close_slope(p, (stretch - 1.0) * ux0 * self.slope(a))
        return p, ux0

    def max_velocity(self, a):
        return float(np.max(np.abs(sine_synth(-a / self.m2, self.half))))


_KERNELS = {}


def kernel_for(grid):
    k = _KERNELS.get(grid)
    if k is None:
        k = _KERNELS[grid] = SpectralKernel(grid)
    return k


def _check_slope(slope):
    if abs(slope) < DEGENERATE_SLOPE:
        raise DegenerateNormalizationError(
            f"|omega_x(0)| = {abs(slope):.3e} is below {DEGENERATE_SLOPE}")


def _rescaled_coeff_rhs(kern, a_coeffs, regime, C, holder=None):
    """(d coeffs / d tau, c) for a rescaled state given by raw arrays."""
    if regime.mode == "holder":
        return _holder_rhs(kern, a_coeffs, holder)
    p, ux0 = kern.quadratic(a_coeffs, regime.a)
    c = (1.0 - regime.a) * ux0
    if regime.nu > 0:
        slope = kern.slope(a_coeffs)
        _check_slope(slope)
        visc = regime.nu * C
        c -= visc * kern.third_at_zero(a_coeffs) / slope
        return p - visc * kern.m2 * a_coeffs + c * a_coeffs, c
    return p + c * a_coeffs, c


# ---------------------------------------------------------------------------
# public right-hand sides
# ---------------------------------------------------------------------------

def rhs_rescaled_inviscid(s):
    """(d omega~/d tau, c) with c = (1 - a) u~_x(0)."""
    if s.regime.mode != "inviscid":
        raise UsageError(f"inviscid right-hand side called in {s.regime.mode} mode")
    kern = kernel_for(s.omega.grid)
    d, c = _rescaled_coeff_rhs(kern, s.omega.coeffs, s.regime, s.C_omega)
    return OddField(d, s.omega.grid), c


def rhs_rescaled_viscous(s):
    """(d omega~/d tau, c, dC/d tau) with c = (1-a) u~_x(0) - nu C omega~_xxx(0)/omega~_x(0)."""
    if s.regime.mode not in ("viscous", "inviscid"):
        raise UsageError(f"viscous right-hand side called in {s.regime.mode} mode")
    kern = kernel_for(s.omega.grid)
    _check_slope(kern.slope(s.omega.coeffs))
    d, c = _rescaled_coeff_rhs(kern, s.omega.coeffs, s.regime, s.C_omega)
    return OddField(d, s.omega.grid), c, c * s.C_omega


def rhs_rescaled_holder(s, profile):
    """(d omega^/d tau, c^) for the perturbation of the Holder background ``profile``."""
    if s.regime.mode != "holder":
        raise UsageError(f"holder right-hand side called in {s.regime.mode} mode")
    if profile.grid != s.omega.grid or abs(profile.alpha - s.regime.alpha) > 0:
        raise ConfigurationError("holder profile does not match the state's grid or alpha")
    kern = kernel_for(s.omega.grid)
    d, c_total = _holder_rhs(kern, s.omega.coeffs, profile)
    return OddField(d, s.omega.grid), c_total - profile.c_bar


def _holder_rhs(kern, a, prof):
    """Perturbation equation about the Holder background, evaluated pointwise.

    Returns (d omega^/d tau, total rate c = c_bar + c^).  The terms are
    L1 w + R + N + F; their sum is the total-field transport equation.
    """
    h = kern.half
    bg = prof.half
    w = sine_synth(a, h)
    wx = cosine_synth(np.concatenate([kern._zero, kern.m * a]), h)
    u, ux, ux0 = kern.velocity(a)
    c_hat = (prof.alpha - 1.0) * ux0
    s, co = bg["sin"], bg["cos"]
    lin = -s * wx + co * w - s * ux + co * u
    res = (-bg["u_res"] * wx + bg["u_res_x"] * w + bg["omega_res"] * ux
           - bg["omega_res_x"] * u + prof.c_bar * w + c_hat * bg["omega"])
    non = w * ux - u * wx + c_hat * w
    total = lin + res + non + bg["F"]
    d = sine_analyze(total, kern.N)
    c = prof.c_bar + c_hat
    kern.close_slope(d, c * kern.slope(a))
    return d, c


def tau_derivative(s):
    """d omega~/d tau (or d omega^/d tau in holder mode) of any rescaled state."""
    kern = kernel_for(s.omega.grid)
    prof = _holder_profile_for(s) if s.regime.mode == "holder" else None
    d, _ = _rescaled_coeff_rhs(kern, s.omega.coeffs, s.regime, s.C_omega, prof)
    return OddField(d, s.omega.grid)


def rhs_physical(s):
    """-u omega_x + a u_x omega (diffusion is handled separately by the integrator)."""
    kern = kernel_for(s.omega.grid)
    p, _ = kern.quadratic(s.omega.coeffs, s.regime.a)
    return OddField(p, s.omega.grid)


def diffusion_substep(s, dt):
    """Exact solution of omega_t = nu omega_xx over ``dt``: mode k decays by exp(-nu k^2 dt)."""
    kern = kernel_for(s.omega.grid)
    decay = np.exp(-s.regime.nu * kern.m2 * dt)
    return replace(s, omega=OddField(s.omega.coeffs * decay, s.omega.grid), t=s.t + dt)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def cfl_limit(s):
    """Largest admissible step.

    Advective limit 0.5/(max|u| N), plus explicit diffusion in rescaled viscous runs.
    """
    kern = kernel_for(s.omega.grid)
    a = s.omega.coeffs
    umax = kern.max_velocity(a)
    if isinstance(s, RescaledState) and s.regime.mode == "holder":
        umax += float(np.max(np.abs(_holder_profile_for(s).half["u"])))
    limit = CFL_NUMBER / (umax * kern.N) if umax > 0 else math.inf
    if isinstance(s, RescaledState) and s.regime.nu > 0:
        limit = min(limit, DIFFUSION_NUMBER / (s.regime.nu * s.C_omega * kern.N**2))
    return limit


_HOLDER_CACHE = {}


def _holder_profile_for(s):
    from .holder import build_holder_profile
    key = (s.omega.grid, s.regime.alpha)
    prof = _HOLDER_CACHE.get(key)
    if prof is None:
        prof = _HOLDER_CACHE[key] = build_holder_profile(s.regime.alpha, s.omega.grid)
    return prof


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rescaled_step(s, dt, prof=None):
    kern = kernel_for(s.omega.grid)
    n = kern.N
    regime = s.regime
    if regime.mode == "holder" and prof is None:
        prof = _holder_profile_for(s)

    def f(y):
        log_c = y[n]
        coeff_rhs, c = _rescaled_coeff_rhs(kern, y[:n], regime, math.exp(log_c), prof)
        out = np.empty(n + 2)
        out[:n] = coeff_rhs
        out[n] = c
        out[n + 1] = math.exp(log_c)
        return out

    y0 = np.concatenate([s.omega.coeffs, [math.log(s.C_omega), s.t_phys]])
    y = _rk4(f, y0, dt)
    return RescaledState(OddField(y[:n], s.omega.grid), math.exp(y[n]), float(y[n + 1]),
                         s.tau + dt, regime)


def _physical_step(s, dt):
    """Classical RK4, or Lawson integrating-factor RK4 when nu > 0.

    The augmented last entry integrates the equivalent rescaled time
    d tau/dt = |omega_x(0)|.
    """
    kern = kernel_for(s.omega.grid)
    n = kern.N
    a_par = s.regime.a
    nu = s.regime.nu

    def f(y):
        out = np.empty(n + 1)
        out[:n], _ = kern.quadratic(y[:n], a_par)
        out[n] = abs(kern.slope(y[:n]))
        return out

    y0 = np.concatenate([s.omega.coeffs, [s.tau]])
    if nu == 0:
        y = _rk4(f, y0, dt)
    else:
        e_half = np.ones(n + 1)
        e_half[:n] = np.exp(-nu * kern.m2 * 0.5 * dt)
        e_full = e_half**2
        k1 = f(y0)
        k2 = f(e_half * (y0 + 0.5 * dt * k1))
        k3 = f(e_half * y0 + 0.5 * dt * k2)
        k4 = f(e_full * y0 + dt * e_half * k3)
        y = e_full * y0 + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    return PhysicalState(OddField(y[:n], s.omega.grid), s.t + dt, s.regime, float(y[n]))


def _finite(s):
    if isinstance(s, RescaledState):
        vals = (s.C_omega, s.t_phys)
    else:
        vals = (s.tau,)
    return bool(np.all(np.isfinite(s.omega.coeffs))) and all(math.isfinite(v) for v in vals)


def renormalize(s):
    """Rescale omega~ and C by -1/omega~_x(0) so that omega~_x(0) = -1 again."""
    slope = kernel_for(s.omega.grid).slope(s.omega.coeffs)
    _check_slope(slope)
    lam = -1.0 / slope
    return replace(s, omega=s.omega * lam, C_omega=s.C_omega * abs(lam)), lam


def step(s, dt, events=None, check_cfl=True):
    """Advance a RescaledState or PhysicalState by ``dt``.

    Rescaled inviscid/viscous states are renormalized (and the event
    appended to ``events``) when the slope drift exceeds 1e-8.
    Non-finite results raise NumericError carrying the input state.
    """
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if check_cfl:
        limit = cfl_limit(s)
        if dt > limit * (1 + 1e-12):
            raise UsageError(f"dt = {dt:.3e} exceeds the stability limit {limit:.3e}")
    if isinstance(s, RescaledState):
        new = _rescaled_step(s, dt)
    elif isinstance(s, PhysicalState):
        new = _physical_step(s, dt)
    else:
        raise UsageError(f"cannot step a {type(s).__name__}")
    if not _finite(new):
        raise NumericError(f"non-finite values after step to {_clock(s) + dt:.6g}", state=s)
    if isinstance(new, RescaledState) and new.regime.mode != "holder":
        drift = kernel_for(new.omega.grid).slope(new.omega.coeffs) + 1.0
        if abs(drift) > DRIFT_TOL:
            new, lam = renormalize(new)
            if events is not None:
                events.append({"event": "renormalize", "tau": new.tau, "drift": drift,
                               "factor": lam})
    return new


def _clock(s):
    return s.tau if isinstance(s, RescaledState) else s.t


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _perturbation(a, mode):
    p = np.array(a, dtype=float)
    if mode != "holder":
        p[0] += 1.0  # omega^ = omega~ + sin(x)
    return p


def diagnostics(s, cfg=EnergyConfig(), prof=None):
    """One DiagnosticsRecord for a rescaled or physical state.

    Norms are of the perturbation omega^ (omega~ + sin x, or the Holder
    perturbation).  Physical states are first normalized to slope -1 at the
    origin, so ``c_omega`` is the equivalent rescaled rate.  In holder mode
    the drift and third-derivative columns refer to omega^.
    """
    grid = s.omega.grid
    kern = kernel_for(grid)
    a = s.omega.coeffs
    if isinstance(s, PhysicalState):
        slope = kern.slope(a)
        _check_slope(slope)
        scale = -1.0 / slope
        w = a * scale
        _, _, ux0 = kern.velocity(w)
        c = (1.0 - s.regime.a) * ux0
        sup = float(np.max(np.abs(sine_synth(a, kern.half))))
        tau, t, mode = s.tau, s.t, "physical"
        drift = 0.0
    else:
        w = a
        mode = s.regime.mode
        if mode == "holder":
            prof = prof or _holder_profile_for(s)
            _, c = _holder_rhs(kern, a, prof)
            _, _, u_hat_x0 = kern.velocity(a)
            ux0 = prof.u_alpha_x0 + u_hat_x0
            total = sine_synth(a, kern.half) + prof.half["omega"]
            sup = float(np.max(np.abs(total))) / s.C_omega
            drift = kern.slope(a)
        else:
            _, c = _rescaled_coeff_rhs(kern, a, s.regime, s.C_omega)
            _, _, ux0 = kern.velocity(a)
            sup = float(np.max(np.abs(sine_synth(a, kern.half)))) / s.C_omega
            drift = kern.slope(a) + 1.0
        tau, t = s.tau, s.t_phys
    p = _perturbation(w, "holder" if mode == "holder" else "total")
    hn = h_norm_coeffs(p)
    fxx = sine_synth(-kern.m2 * p, kern.half)
    # even integrand: twice the positive half
    wv = hn**2 + 2.0 * grid.spacing * float(np.sum(fxx**2 * np.cos(0.5 * grid.half_points) ** 2))
    return DiagnosticsRecord(
        tau=float(tau), t=float(t), c_omega=float(c), u_x0=float(ux0), h_norm=hn,
        w_value=wv, E=energy_E_coeffs(p, cfg.mu), I4=energy_I_coeffs(p, grid, cfg.mu1, 4),
        sup_omega=sup, omega_x0_drift=float(drift), omega_xxx0=kern.third_at_zero(w))


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _evolve(s, horizon, clock, dt_max, sample_dt, cfg, max_steps, on_row, on_state):
    if horizon < clock(s):
        raise UsageError("horizon lies before the initial time")
    if sample_dt <= 0:
        raise UsageError("sample interval must be positive")
    rows = [diagnostics(s, cfg)]
    if on_row:
        on_row(rows[-1])
    if on_state:
        on_state(s)
    events = []
    n_samples = max(1, int(round((horizon - clock(s)) / sample_dt)))
    t0 = clock(s)
    sample_times = t0 + (horizon - t0) * np.arange(1, n_samples + 1) / n_samples
    steps = 0
    for target in sample_times:
        while clock(s) < target - 1e-12 * max(1.0, abs(target)):
            dt = min(dt_max if dt_max else math.inf, cfl_limit(s), target - clock(s))
            try:
                s = step(s, dt, events, check_cfl=False)
            except NumericError as exc:
                exc.rows = rows
                exc.events = events
                raise
            steps += 1
            if steps > max_steps:
                err = NumericError(f"step budget {max_steps} exhausted at {clock(s):.6g}",
                                   state=s)
                err.rows, err.events = rows, events
                raise err
        row = diagnostics(s, cfg)
        if not row.is_finite():
            err = NumericError(f"non-finite diagnostics at {clock(s):.6g}", state=s)
            err.rows, err.events = rows, events
            raise err
        rows.append(row)
        if on_row:
            on_row(row)
        if on_state:
            on_state(s)
    return RunResult(s, rows, events, steps)


def evolve_rescaled(s, tau_max, dt_max=None, sample_dt=0.5, cfg=EnergyConfig(),
                    max_steps=10_000_000, on_row=None, on_state=None):
    """Integrate a rescaled state to ``tau_max``; diagnostics every ``sample_dt``.

    ``on_row`` receives each DiagnosticsRecord and ``on_state`` each sampled state.
    """
    return _evolve(s, tau_max, lambda q: q.tau, dt_max, sample_dt, cfg, max_steps, on_row,
                   on_state)


def evolve_physical(s, t_max, dt_max=None, sample_dt=0.5, cfg=EnergyConfig(),
                    max_steps=10_000_000, on_row=None, on_state=None):
    """Integrate the unscaled equation to ``t_max``; diagnostics every ``sample_dt``."""
    return _evolve(s, t_max, lambda q: q.t, dt_max, sample_dt, cfg, max_steps, on_row,
                   on_state)


# ---------------------------------------------------------------------------
# blow-up detection
# ---------------------------------------------------------------------------

def _linear_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def flatness(t, sup):
    """(max - min)/max of sup|omega| * t."""
    prod = np.asarray(sup) * np.asarray(t)
    return float((prod.max() - prod.min()) / prod.max())


def detect_blowup(series, window_fraction=0.25, min_points=20, r2_min=0.999,
                  flat_tol=0.05):
    """Classify a run from its sup|omega|(t) history.

    1/sup|omega| is fitted linearly against t on the final window.  A
    decreasing fit with r^2 >= ``r2_min`` is a blow-up at the fit's root; an
    increasing one is decay when, in addition, sup|omega| * t varies by at
    most ``flat_tol`` over the window.  Anything else is inconclusive.
    """
    t = np.array([r.t for r in series], dtype=float)
    sup = np.array([r.sup_omega for r in series], dtype=float)
    if len(t) < min_points:
        raise UsageError(f"need at least {min_points} samples, got {len(t)}")
    n_win = max(min_points, int(math.ceil(window_fraction * len(t))))
    tw, sw = t[-n_win:], sup[-n_win:]
    if np.any(sw <= 0) or not np.all(np.isfinite(sw)):
        return BlowupVerdict("inconclusive", None, float("nan"), window=(tw[0], tw[-1]))
    slope, intercept, r2 = _linear_fit(tw, 1.0 / sw)
    flat = flatness(tw, sw) if tw[0] > 0 else float("nan")
    window = (float(tw[0]), float(tw[-1]))
    if slope < 0 and r2 >= r2_min:
        return BlowupVerdict("blowup", -intercept / slope, r2, slope, flat, window)
    if slope > 0 and r2 >= r2_min and flat <= flat_tol:
        return BlowupVerdict("global_decay", None, r2, slope, flat, window)
    return BlowupVerdict("inconclusive", None, r2, slope, flat, window)
