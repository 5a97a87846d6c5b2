import math

import numpy as np
import pytest

from pjlab.dynamics import (DiagnosticsRecord, PhysicalState, Regime, RescaledState,
                            cfl_limit, detect_blowup, diagnostics, diffusion_substep,
                            evolve_physical, evolve_rescaled, rhs_physical, rhs_rescaled_holder,
                            rhs_rescaled_inviscid, rhs_rescaled_viscous, step, tau_derivative)
from pjlab.errors import (ConfigurationError, DegenerateNormalizationError, NumericError,
                          UnsupportedParameterError, UsageError)
from pjlab.holder import build_holder_profile
from pjlab.operators import apply_L1_physical
from pjlab.profiles import solve_profile
from pjlab.spectral import Grid, OddField, multiply, recover_velocity
from pjlab.weighted import h_norm


def steady(grid):
    return OddField(-np.eye(1, grid.modes, 0).ravel(), grid)


def bump(grid, beta):
    s = lambda x: np.sin(x) ** 3 * (1 - 1.25 * np.sin(x) ** 2)  # noqa: E731
    return beta * OddField.from_function(s, grid)


def rescaled(omega, a, c0=1.0, nu=0.0, mode="inviscid", alpha=1.0):
    return RescaledState(omega, c0, 0.0, 0.0, Regime(a, nu, alpha, mode))


def test_regime_validation():
    with pytest.raises(ConfigurationError):
        Regime(1.0, 0.5, mode="inviscid")
    with pytest.raises(ConfigurationError):
        Regime(1.1, mode="holder", alpha=0.95)
    with pytest.raises(UnsupportedParameterError):
        Regime(1.0, mode="holder", alpha=0.8)
    with pytest.raises(ConfigurationError):
        RescaledState(steady(Grid.for_modes(8)), 0.0, 0.0, 0.0, Regime(1.0))


def test_steady_state_is_fixed_at_a_equal_one():
    g = Grid.for_modes(16)
    d, c = rhs_rescaled_inviscid(rescaled(steady(g), 1.0))
    assert c == 0.0 and np.max(np.abs(d.coeffs)) < 1e-15


@pytest.mark.parametrize("a", [0.9, 1.05, 1.2])
def test_forcing_of_steady_state(a):
    g = Grid.for_modes(16)
    d, c = rhs_rescaled_inviscid(rescaled(steady(g), a))
    want = (1 - a) * OddField.from_function(lambda x: np.sin(x) * (np.cos(x) - 1), g)
    assert c == pytest.approx(1 - a)
    assert np.allclose(d.coeffs, want.coeffs, atol=1e-14)


def test_viscous_terms_cancel_on_steady_state():
    g = Grid.for_modes(16)
    a, nu, c0 = 1.05, 1.0, 0.0025
    d, c, dc = rhs_rescaled_viscous(rescaled(steady(g), a, c0, nu, "viscous"))
    want = (1 - a) * OddField.from_function(lambda x: np.sin(x) * (np.cos(x) - 1), g)
    assert c == pytest.approx((1 - a) + nu * c0)
    assert dc == pytest.approx(c * c0)
    assert np.allclose(d.coeffs, want.coeffs, atol=1e-14)


def test_viscous_reduces_to_inviscid_without_viscosity():
    rng = np.random.default_rng(0)
    g = Grid.for_modes(32)
    w = steady(g) + OddField(0.01 * rng.standard_normal(32) / np.arange(1, 33) ** 2, g)
    d1, c1 = rhs_rescaled_inviscid(rescaled(w, 1.03))
    d2, c2, _ = rhs_rescaled_viscous(rescaled(w, 1.03))
    assert c1 == c2 and np.array_equal(d1.coeffs, d2.coeffs)


def test_degenerate_normalization():
    g = Grid.for_modes(8)
    w = OddField([1e-4, 0, 0, 0], g)
    with pytest.raises(DegenerateNormalizationError):
        rhs_rescaled_viscous(rescaled(w, 1.0, 1.0, 1.0, "viscous"))


def test_slope_of_rhs_vanishes_for_random_states():
    rng = np.random.default_rng(1)
    g = Grid.for_modes(64)
    m = np.arange(1, 65)
    for _ in range(10):
        p = rng.standard_normal(64) / m**3
        p[0] = -float(m[1:] @ p[1:])
        w = steady(g) + OddField(0.2 * p, g)
        d, _ = rhs_rescaled_inviscid(rescaled(w, 1.04))
        assert abs(float(m @ d.coeffs)) < 1e-10
        d, _, _ = rhs_rescaled_viscous(rescaled(w, 1.04, 0.01, 0.5, "viscous"))
        assert abs(float(m @ d.coeffs)) < 1e-10


def test_holder_rhs_at_alpha_one_is_linear_plus_quadratic():
    g = Grid.for_modes(32)
    prof = build_holder_profile(1.0, g)
    w = bump(g, 0.05)
    d, c_hat = rhs_rescaled_holder(rescaled(w, 1.0, mode="holder"), prof)
    vel = recover_velocity(w)
    quad = multiply(w, vel.u.derivative()) - multiply(vel.u, w.derivative())
    want = apply_L1_physical(w) + quad
    assert c_hat == 0.0
    assert np.allclose(d.coeffs[:-1], want.coeffs[:-1], atol=1e-13)


def test_holder_forcing_scales_with_alpha_gap():
    g = Grid.for_modes(64)
    sizes = []
    for alpha in (0.95, 0.975):
        prof = build_holder_profile(alpha, g)
        d, c_hat = rhs_rescaled_holder(rescaled(OddField.zeros(g), 1.0, mode="holder",
                                                alpha=alpha), prof)
        assert c_hat == 0.0
        f = prof.half["F"]
        assert np.allclose(d.half_samples(), f, atol=0.05 * np.max(np.abs(f)))
        sizes.append(np.max(np.abs(f)) / (1 - alpha))
    assert 0.5 <= sizes[1] / sizes[0] <= 2.0


def test_holder_profile_must_match_state():
    g = Grid.for_modes(16)
    prof = build_holder_profile(0.95, g)
    with pytest.raises(ConfigurationError):
        rhs_rescaled_holder(rescaled(OddField.zeros(g), 1.0, mode="holder", alpha=0.99), prof)


def test_physical_rhs_on_profile_is_self_similar():
    # omega = omega_a / (1 + c t) gives omega_t = -c omega_a at t = 0
    r = solve_profile(1.03, 128)
    d = rhs_physical(PhysicalState(r.omega, 0.0, Regime(1.03)))
    assert np.max(np.abs(d.half_samples() + r.c * r.omega.half_samples())) < 1e-9
    g = Grid.for_modes(8)
    assert np.max(np.abs(rhs_physical(PhysicalState(steady(g), 0.0, Regime(1.0))).coeffs)) == 0


def test_diffusion_substep_is_exact():
    g = Grid.for_modes(8)
    w = OddField(np.ones(8), g)
    s = diffusion_substep(PhysicalState(w, 0.0, Regime(1.0, 0.3, mode="viscous")), 0.7)
    k = np.arange(1, 9)
    assert np.allclose(s.omega.coeffs, np.exp(-0.3 * k**2 * 0.7), rtol=1e-12)
    assert np.all(np.diff(np.abs(s.omega.coeffs)) <= 0)


def test_step_keeps_steady_state_fixed():
    g = Grid.for_modes(16)
    s = rescaled(steady(g), 1.0)
    out = step(s, 0.01)
    assert np.max(np.abs(out.omega.coeffs - s.omega.coeffs)) <= 1e-12 * 0.01
    assert out.t_phys == pytest.approx(0.01) and out.C_omega == 1.0


def test_scale_factor_follows_constant_rate():
    r = solve_profile(1.05, 64)
    s = rescaled(r.omega, 1.05)
    res = evolve_rescaled(s, 2.0, sample_dt=1.0)
    assert res.state.C_omega == pytest.approx(math.exp(r.c * 2.0), rel=1e-10)
    t_exact = (math.exp(r.c * 2.0) - 1) / r.c
    assert res.state.t_phys == pytest.approx(t_exact, rel=1e-10)


def test_cfl_guard_and_non_finite_stop():
    g = Grid.for_modes(16)
    s = rescaled(steady(g) + bump(g, 0.1), 1.05)
    with pytest.raises(UsageError):
        step(s, 10 * cfl_limit(s))
    with pytest.raises(UsageError):
        step(s, 0.0)
    big = PhysicalState(OddField(1e150 * np.ones(16), g), 0.0, Regime(1.0))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericError) as info:
        step(big, 1.0, check_cfl=False)
    assert info.value.state is big


def test_renormalization_event_logged():
    g = Grid.for_modes(16)
    s = rescaled(1.1 * steady(g), 1.0)
    events = []
    out = step(s, 0.01, events)
    assert len(events) == 1 and events[0]["event"] == "renormalize"
    assert out.omega.slope_at_zero() == pytest.approx(-1.0, abs=1e-14)
    assert out.C_omega == pytest.approx(1 / 1.1)


def test_slope_drift_stays_small():
    g = Grid.for_modes(64)
    res = evolve_rescaled(rescaled(steady(g) + bump(g, 0.1), 1.05), 5.0)
    assert max(abs(r.omega_x0_drift) for r in res.rows) <= 1e-6
    assert not res.events


def test_frame_consistency():
    g = Grid.for_modes(64)
    w0 = steady(g) + bump(g, 0.1)
    res = evolve_rescaled(rescaled(w0, 1.05), 3.0, sample_dt=3.0)
    end = res.state
    phys = evolve_physical(PhysicalState(w0, 0.0, Regime(1.05)), end.t_phys,
                           sample_dt=end.t_phys)
    mapped = (1.0 / end.C_omega) * end.omega
    assert np.max(np.abs(mapped.half_samples() - phys.state.omega.half_samples())) <= 1e-4


def test_h_norm_non_increasing_after_transient():
    g = Grid.for_modes(64)
    res = evolve_rescaled(rescaled(steady(g) + bump(g, 0.1), 1.0), 15.0, sample_dt=0.5)
    h = np.array([r.h_norm for r in res.rows if r.tau >= 2.0])
    assert np.all(np.diff(h) <= 1e-12)


def test_viscous_physical_run_decays_modes():
    g = Grid.for_modes(32)
    w0 = steady(g) + bump(g, 0.1)
    res = evolve_physical(PhysicalState(w0, 0.0, Regime(1.0, 0.5, mode="viscous")), 1.0,
                          sample_dt=0.25)
    sups = [r.sup_omega for r in res.rows]
    assert sups[-1] < sups[0]
    assert res.state.tau > 0


def test_diagnostics_of_steady_state():
    g = Grid.for_modes(16)
    row = diagnostics(rescaled(steady(g), 1.0))
    assert row.h_norm == 0.0 and row.E == 0.0 and row.I4 == 0.0
    assert row.u_x0 == 1.0 and row.omega_xxx0 == 1.0 and row.is_finite()


def test_tau_derivative_matches_rhs():
    g = Grid.for_modes(16)
    s = rescaled(steady(g) + bump(g, 0.1), 1.02)
    assert np.array_equal(tau_derivative(s).coeffs, rhs_rescaled_inviscid(s)[0].coeffs)
    assert h_norm(tau_derivative(s)) > 0


def _rows(t, sup):
    return [DiagnosticsRecord(0.0, ti, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, si, 0.0, 0.0)
            for ti, si in zip(t, sup)]


def test_detect_blowup_on_exact_self_similar_series():
    c = -0.05
    t = np.linspace(0, 19, 80)
    v = detect_blowup(_rows(t, 1.0 / (1 + c * t)))
    assert v.kind == "blowup" and v.T_estimate == pytest.approx(20.0, rel=1e-10)
    assert v.fit_r2 >= 0.999


def test_detect_blowup_decay_and_inconclusive():
    t = np.linspace(1, 100, 80)
    assert detect_blowup(_rows(t, 3.0 / t)).kind == "global_decay"
    noisy = 1 + 0.3 * np.sin(np.arange(80))
    assert detect_blowup(_rows(t, noisy)).kind == "inconclusive"
    with pytest.raises(UsageError):
        detect_blowup(_rows(t[:10], 1 / t[:10]))


def test_evolve_rejects_bad_horizon():
    g = Grid.for_modes(8)
    with pytest.raises(UsageError):
        evolve_rescaled(rescaled(steady(g), 1.0), -1.0)


def test_step_budget_exhaustion_carries_rows():
    g = Grid.for_modes(16)
    with pytest.raises(NumericError) as info:
        evolve_rescaled(rescaled(steady(g) + bump(g, 0.1), 1.05), 5.0, max_steps=3)
    assert info.value.rows
