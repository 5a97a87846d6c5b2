"""Self-similar profiles (omega_a, c_a) of the rescaled steady equation.

A profile solves

    -u w_x + a u_x w + c w = 0,   c = (1 - a) u_x(0),   w_x(0) = -1,

so that omega(x, t) = omega_a(x) / (1 + c t) solves the unscaled equation.
Newton acts on the N sine coefficients; the residual of the top mode is
replaced by the gauge row sum m a_m + 1.  The truncated quadratic term
carries the slope closure of ``dynamics.SpectralKernel``, under which the N
residual components satisfy sum m r_m = 0 identically, so the dropped row
is implied by the others.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import kernel_for
from .errors import DomainError, GaugeDegeneracyError, NonConvergenceError, UsageError
from .spectral import Grid, OddField, sine_synth
from .weighted import w_value

__all__ = [
    "ProfileResult", "solve_profile", "steady_residual", "profile_estimates",
    "compare_estimates", "continuation_sweep", "SweepOutcome", "self_similar_residual",
    "load_profile",
]

MAX_ITERS = 25
FD_STEP = 1e-7
STEP_TOL = 1e-13
COND_LIMIT = 1e13
WINDOW = 0.1


@dataclass(frozen=True, eq=False)
class ProfileResult:
    a: float
    omega: OddField
    c: float
    residual_sup: float
    newton_iters: int
    N: int
    history: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"a": self.a, "c": self.c, "N": self.N, "residual_sup": self.residual_sup,
                "newton_iters": self.newton_iters,
                "coeffs": [float(v) for v in self.omega.coeffs]}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def load_profile(path, grid=None):
    """Read a profile JSON written by ``ProfileResult.save``."""
    with open(path) as fh:
        data = json.load(fh)
    coeffs = np.asarray(data["coeffs"], dtype=float)
    grid = grid or Grid.for_modes(len(coeffs))
    if len(coeffs) > grid.modes:
        raise UsageError(f"profile has {len(coeffs)} modes, grid holds {grid.modes}")
    return ProfileResult(float(data["a"]), OddField(coeffs, grid), float(data["c"]),
                         float(data["residual_sup"]), int(data["newton_iters"]), grid.modes)


def steady_residual(coeffs, a, grid):
    """(residual coefficients, c) of -u w_x + a u_x w + c w with c = (1 - a) u_x(0)."""
    kern = kernel_for(grid)
    p, ux0 = kern.quadratic(coeffs, a)
    c = (1.0 - a) * ux0
    return p + c * coeffs, c


def solve_profile(a, N, init=None, M=None, tol=STEP_TOL, max_iters=MAX_ITERS):
    """Newton iteration for the profile at stretching ``a`` with N sine modes.

    ``init`` (an OddField or coefficient array) defaults to -sin(x).
    Raises NonConvergenceError after ``max_iters`` iterations or when the
    residual grows, and GaugeDegeneracyError when the Jacobian is singular.
    """
    if not abs(1.0 - a) <= WINDOW:
        raise UsageError(f"|1 - a| must be <= {WINDOW}, got a = {a}")
    if N < 2:
        raise UsageError(f"need at least 2 modes, got {N}")
    grid = Grid.for_modes(N, M)
    m = np.arange(1, N + 1, dtype=float)
    if init is None:
        x = np.zeros(N)
        x[0] = -1.0
    else:
        src = init.coeffs if isinstance(init, OddField) else np.asarray(init, dtype=float)
        x = np.zeros(N)
        x[: min(N, len(src))] = src[:N]

    def system(v):
        r, c = steady_residual(v, a, grid)
        g = r.copy()
        g[-1] = float(m @ v) + 1.0
        return g, r, c

    history = []
    g, r, c = system(x)
    first = float(np.max(np.abs(g)))
    for it in range(1, max_iters + 1):
        jac = np.empty((N, N))
        for j in range(N):
            xp = x.copy()
            xp[j] += FD_STEP
            jac[:, j] = (system(xp)[0] - g) / FD_STEP
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise GaugeDegeneracyError(
                f"Jacobian condition number {cond:.3e} at iteration {it}",
                last_iterate=OddField(x, grid), history=history)
        delta = np.linalg.solve(jac, g)
        x = x - delta
        g, r, c = system(x)
        res = float(np.max(np.abs(g)))
        history.append((it, res, float(np.max(np.abs(delta))), c))
        if not np.isfinite(res) or res > max(1e3 * first, 1.0):
            raise NonConvergenceError(f"residual grew to {res:.3e} at iteration {it}",
                                      last_iterate=OddField(x, grid), history=history)
        if res <= tol or float(np.max(np.abs(delta))) <= tol:
            break
    else:
        raise NonConvergenceError(f"no convergence in {max_iters} iterations "
                                  f"(residual {res:.3e})",
                                  last_iterate=OddField(x, grid), history=history)
    sup_res = float(np.max(np.abs(sine_synth(r, grid.half))))
    return ProfileResult(float(a), OddField(x, grid), float(c), sup_res, it, N, history)


def profile_estimates(r):
    """sqrt(w_value(omega_a + sin x)) / |1-a| and |c - (1-a)| / (1-a)^2 for one profile.

    At a = 1 both ratios are undefined; the report then carries
    ``exact_steady = True`` and the distance of omega_a from -sin(x).
    """
    pert = r.omega.coeffs.copy()
    pert[0] += 1.0
    dist = math.sqrt(max(w_value(OddField(pert, r.omega.grid)), 0.0))
    eps = 1.0 - r.a
    out = {"a": r.a, "N": r.N, "c": r.c, "w_distance": dist,
           "c_within_eps": abs(r.c - eps) <= abs(eps)}
    if eps == 0.0:
        out.update(exact_steady=True, w_ratio=None, c_ratio=None)
    else:
        out.update(exact_steady=False, w_ratio=dist / abs(eps),
                   c_ratio=abs(r.c - eps) / eps**2)
    return out


def compare_estimates(r_eps, r_half):
    """Ratios at |1-a| = eps and eps/2; flags a ratio that more than doubles (or halves)."""
    e1, e2 = profile_estimates(r_eps), profile_estimates(r_half)
    if e1["exact_steady"] or e2["exact_steady"]:
        raise UsageError("ratios are undefined at a = 1")
    out = {"eps": abs(1 - r_eps.a), "eps_half": abs(1 - r_half.a)}
    for key in ("w_ratio", "c_ratio"):
        q = e2[key] / e1[key]
        out[key] = (e1[key], e2[key])
        out[key + "_quotient"] = q
        out[key + "_unstable"] = not (0.5 <= q <= 2.0)
    return out


@dataclass
class SweepOutcome:
    results: list
    failure: Exception | None = None
    failed_a: float | None = None

    @property
    def c_monotone(self):
        cs = [r.c for r in self.results]
        return all(x > y for x, y in zip(cs, cs[1:]))


def continuation_sweep(a_values, N, M=None, on_result=None):
    """Warm-started Newton solves along sorted ``a_values``.

    The first failure stops the sweep; the results obtained so far are
    returned with the error attached.
    """
    a_values = list(a_values)
    if not a_values:
        raise UsageError("a_values must be non-empty")
    if a_values != sorted(a_values):
        raise UsageError("a_values must be sorted")
    results = []
    init = None
    for a in a_values:
        try:
            r = solve_profile(a, N, init=init, M=M)
        except (NonConvergenceError, UsageError) as exc:
            return SweepOutcome(results, exc, a)
        results.append(r)
        if on_result:
            on_result(r)
        init = r.omega
    return SweepOutcome(results)


def self_similar_residual(r, t_samples):
    """max over t of sup|d_t w + u w_x - a w u_x| for w = omega_a / (1 + c t).

    The time derivative is the analytic -c omega_a / (1 + c t)^2; the
    quadratic terms use the same truncated product as the solver.
    """
    grid = r.omega.grid
    kern = kernel_for(grid)
    worst = 0.0
    for t in t_samples:
        denom = 1.0 + r.c * t
        if denom <= 0:
            raise DomainError(f"t = {t} is at or past the blow-up time {-1.0 / r.c:.6g}")
        w = r.omega.coeffs / denom
        p, _ = kern.quadratic(w, r.a)
        res = -r.c * r.omega.coeffs / denom**2 - p
        worst = max(worst, float(np.max(np.abs(sine_synth(res, grid.half)))))
    return worst
