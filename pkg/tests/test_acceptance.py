"""Acceptance suite: twelve numbered criteria, one PASS/FAIL line each.

Run under pytest (the lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from pjlab.dynamics import (PhysicalState, Regime, RescaledState, detect_blowup,
                            evolve_physical, evolve_rescaled, flatness, step, tau_derivative)
from pjlab.holder import cusp_check, ratio_stability
from pjlab.operators import (TridiagonalOperator, apply_L1_physical, coeff_d_exact,
                             damping_audit, tilde_matrix)
from pjlab.profiles import profile_estimates, self_similar_residual, solve_profile
from pjlab.spectral import Grid, OddField, recover_velocity
from pjlab.weighted import h_norm, h_norm_coeffs, weighted_identity_defect

RESULTS = {}


def _steady(grid):
    return OddField(-np.eye(1, grid.modes, 0).ravel(), grid)


def _balanced(grid, beta):
    s = lambda x: np.sin(x) ** 3 * (1.0 - 1.25 * np.sin(x) ** 2)  # noqa: E731
    return _steady(grid) + beta * OddField.from_function(s, grid)


def criterion_1():
    t0 = time.perf_counter()
    rep = damping_audit(100_000)
    elapsed = time.perf_counter() - t0
    gap = coeff_d_exact(2) - coeff_d_exact(1)
    ok = rep.ok and gap == Fraction(9, 16) and elapsed < 10
    return ok, f"margins ok={rep.ok}, d_2 - d_1 = {gap}, {elapsed:.2f}s"


def criterion_2():
    rng = np.random.default_rng(2)
    op = TridiagonalOperator(256)
    gap = op.d[1:257] - op.d[:256]
    worst_bound = -np.inf
    worst_rel = 0.0
    for _ in range(100):
        c = rng.standard_normal(256)
        q = op.quadratic_form(c)
        n2 = float(c @ c)
        worst_bound = max(worst_bound, q + 0.5 * n2)
        defect = -q - 0.5 * n2
        expected = float((gap - 0.5) @ (c * c))
        worst_rel = max(worst_rel, abs(defect - expected) / abs(expected))
    ok = worst_bound <= 0 and worst_rel <= 1e-10
    return ok, f"max <L1 c,c> + |c|^2/2 = {worst_bound:.3e}, defect rel err {worst_rel:.2e}"


def criterion_3():
    diff = float(np.max(np.abs(tilde_matrix(apply_L1_physical, 64)
                               - TridiagonalOperator(64).matrix())))
    g = Grid.for_modes(8)
    img = apply_L1_physical(OddField.from_function(lambda x: np.sin(2 * x), g)).coeffs
    want = np.zeros(8)
    want[0], want[2] = 9 / 8, -3 / 8
    err = float(np.max(np.abs(img - want)))
    return diff <= 1e-10 and err <= 1e-12, f"row mismatch {diff:.2e}, L1 sin2x error {err:.2e}"


def criterion_4():
    rng = np.random.default_rng(4)
    grid = Grid.for_modes(64)
    nodes, weights = np.polynomial.legendre.leggauss(120)
    worst_rt = worst_ux = worst_formula = worst_id = 0.0
    for _ in range(20):
        a = rng.standard_normal(32) / np.arange(1, 33) ** 3
        f = OddField(a, grid)
        vel = recover_velocity(f)
        worst_rt = max(worst_rt, float(np.max(np.abs(vel.u.derivative(2).coeffs - f.coeffs))))
        y = 0.5 * np.pi * (nodes + 1)
        quad = float(np.sum(0.5 * np.pi * weights * (y - np.pi) * f.evaluate(y))) / np.pi
        worst_ux = max(worst_ux, abs(quad - vel.u_x0))
        # u(x) = int_0^x (x - y) omega(y) dy + x u_x(0)
        for x in (0.3, 1.7, 3.0):
            yy = 0.5 * x * (nodes + 1)
            integral = float(np.sum(0.5 * x * weights * (x - yy) * f.evaluate(yy)))
            worst_formula = max(worst_formula,
                                abs(integral + x * vel.u_x0 - float(vel.u.evaluate(x))))
        h = a.copy()
        h[0] = -float(np.arange(2, 33) @ a[1:])
        worst_id = max(worst_id, abs(weighted_identity_defect(OddField(h, grid))[0]))
    ok = worst_rt <= 1e-12 and worst_ux <= 1e-10 and worst_formula <= 1e-12 and worst_id <= 1e-8
    return ok, (f"u_xx roundtrip {worst_rt:.1e}, u_x(0) {worst_ux:.1e}, "
                f"integral formula {worst_formula:.1e}, weighted identity {worst_id:.1e}")


def criterion_5():
    t0 = time.perf_counter()
    results = {}
    problems = []
    for a in np.round(np.arange(0.96, 1.0401, 0.01), 10):
        r = solve_profile(float(a), 256)
        results[float(a)] = r
        if r.newton_iters > 10 or r.residual_sup > 1e-11:
            problems.append(f"a={a}: {r.newton_iters} iters, residual {r.residual_sup:.1e}")
        if np.sign(r.c) != np.sign(round(1 - a, 12)):
            problems.append(f"a={a}: sign(c) wrong")
    if abs(results[1.0].c) > 1e-12:
        problems.append(f"c(1) = {results[1.0].c}")
    quotients = []
    for side in (1, -1):
        for eps in (0.04, 0.02):
            e1 = profile_estimates(results[round(1 - side * eps, 10)])
            e2 = profile_estimates(results[round(1 - side * eps / 2, 10)])
            for key in ("c_ratio", "w_ratio"):
                q = e2[key] / e1[key]
                quotients.append(q)
                if not 0.5 <= q <= 2.0:
                    problems.append(f"{key} quotient {q:.3f} at eps={side * eps}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 60:
        problems.append(f"runtime {elapsed:.1f}s")
    c_const = profile_estimates(results[1.02])["c_ratio"]
    return not problems, (f"{len(results)} profiles, quotients in "
                          f"[{min(quotients):.3f}, {max(quotients):.3f}], "
                          f"C ~ {c_const:.4f}, {elapsed:.1f}s" + "; ".join([""] + problems))


def criterion_6():
    r = solve_profile(1.02, 256)
    res = self_similar_residual(r, [0.0, 10.0, 40.0])
    return res <= 1e-10, f"max sup residual {res:.2e}"


def criterion_7():
    t0 = time.perf_counter()
    r = solve_profile(1.05, 256)
    T = -1.0 / r.c
    run = evolve_physical(PhysicalState(r.omega, 0.0, Regime(1.05)), 19.5, sample_dt=19.5 / 200)
    v = detect_blowup(run.rows)
    elapsed = time.perf_counter() - t0
    rel = abs(v.T_estimate - T) / T if v.T_estimate else math.inf
    ok = v.kind == "blowup" and v.fit_r2 >= 0.9999 and rel <= 0.01 and elapsed < 120
    return ok, f"T fit {v.T_estimate:.6f} vs -1/c {T:.6f} (rel {rel:.1e}), r2 {v.fit_r2:.8f}, " \
               f"{elapsed:.1f}s"


def criterion_8():
    r = solve_profile(0.95, 256)
    run = evolve_physical(PhysicalState(r.omega, 0.0, Regime(0.95)), 200.0, sample_dt=1.0)
    rows = [x for x in run.rows if x.t >= 50.0]
    flat = flatness([x.t for x in rows], [x.sup_omega for x in rows])
    verdict = detect_blowup(run.rows)
    return flat <= 0.05, (f"sup|omega|*t variation over [50, 200] = {flat:.3f} "
                          f"(c = {r.c:.4f}); tail-window verdict {verdict.kind} "
                          f"with flatness {verdict.flatness:.3f}")


def criterion_9():
    a = 1.05
    grid = Grid.for_modes(128)
    s = RescaledState(_balanced(grid, 0.1), 1.0, 0.0, 0.0, Regime(a))
    taus, rates = [], []

    def on_state(st):
        taus.append(st.tau)
        rates.append(h_norm(tau_derivative(st)))

    run = evolve_rescaled(s, 30.0, sample_dt=0.5, on_state=on_state)
    taus, rates = np.array(taus), np.array(rates)
    win = (taus >= 5.0) & (taus <= 30.0)
    rate = -np.polyfit(taus[win], np.log(rates[win]), 1)[0]
    prof = solve_profile(a, 128)
    dist = h_norm_coeffs(run.state.omega.coeffs - prof.omega.coeffs)
    return rate >= 0.25 and dist <= 1e-6, f"decay rate {rate:.3f}, H distance {dist:.2e}"


def criterion_10():
    problems = []
    worst = 0.0
    for alpha in (0.95, 0.99):
        for key, (r1, r2, q) in ratio_stability(alpha).items():
            worst = max(worst, abs(math.log(q)))
            if not (math.isfinite(r1) and math.isfinite(r2) and 0.5 <= q <= 2.0):
                problems.append(f"alpha={alpha} {key}: {r1:.3g} -> {r2:.3g}")
        cc = cusp_check(alpha)
        separate = min(cc["omega_res_xx_sup"], cc["stretch_term_dx_sup"],
                       cc["sin_res_xx_dx_sup"])
        if not (cc["combination_sup"] <= 1.0 and cc["bound_ratio_sup"] < 10.0
                and separate > 1e3):
            problems.append(f"alpha={alpha} cusp: {cc}")
    return not problems, (f"max ratio change factor {math.exp(worst):.3f}"
                          + "; ".join([""] + problems))


def criterion_11():
    a = 1.05
    grid = Grid.for_modes(512)
    s = RescaledState(_steady(grid), (a - 1) ** 2, 0.0, 0.0, Regime(a, 1.0, mode="viscous"))
    scale = []
    run = evolve_rescaled(s, 50.0, sample_dt=0.5, on_state=lambda st: scale.append(st.C_omega))
    c = np.array([x.c_omega for x in run.rows])
    i4 = np.array([x.I4 for x in run.rows])
    drift = max(abs(x.omega_x0_drift) for x in run.rows)
    ok = (np.all(c < 0) and np.all(np.diff(scale) < 0) and np.all(i4 <= 5 * abs(1 - a))
          and drift <= 1e-6)
    return ok, (f"max c {c.max():.4f}, C {scale[0]:.4g} -> {scale[-1]:.4g}, "
                f"max I4 {i4.max():.4f}, drift {drift:.1e}")


def criterion_12():
    grid = Grid.for_modes(32)
    s0 = RescaledState(_balanced(grid, 0.1), 1.0, 0.0, 0.0, Regime(1.05))

    def run(n, horizon=2.0):
        s = s0
        for _ in range(n):
            s = step(s, horizon / n)
        return np.r_[s.omega.coeffs, math.log(s.C_omega), s.t_phys]

    y1, y2, y3 = run(130), run(260), run(520)
    ratio = float(np.linalg.norm(y1 - y2) / np.linalg.norm(y2 - y3))
    return 12 <= ratio <= 20, f"error ratio {ratio:.2f}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]
TITLES = {
    1: "exact damping audit", 2: "quadratic-form bound", 3: "operator consistency",
    4: "velocity recovery and identities", 5: "profile family", 6: "self-similar residual",
    7: "blow-up cross-check", 8: "global decay", 9: "rescaled convergence",
    10: "Holder residual bounds", 11: "viscous run", 12: "integrator order",
}


def _line(n, ok, detail):
    return f"criterion {n:>2} [{'PASS' if ok else 'FAIL'}] {TITLES[n]}: {detail}"


@pytest.mark.parametrize("n", range(1, 13))
def test_criterion(n):
    ok, detail = CRITERIA[n - 1]()
    RESULTS[n] = (ok, detail)
    print(_line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, crit in enumerate(CRITERIA, 1):
        ok, detail = crit()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
