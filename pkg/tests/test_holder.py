import csv

import numpy as np
import pytest
from scipy import special

from pjlab.errors import UnsupportedParameterError
from pjlab.holder import (background_derivatives, boole, build_holder_profile,
                          canceled_combination, canceled_combination_dx, cusp_check,
                          graded_integral, holder_u_x0, ratio_stability, verify_residual_lemma)
from pjlab.spectral import Grid


def test_boole_is_exact_on_quintics():
    f = lambda x: 3 * x**5 - x**4 + 2 * x  # noqa: E731
    assert boole(f, 0.0, 2.0, panels=1) == pytest.approx(32 - 32 / 5 + 4, rel=1e-14)


@pytest.mark.parametrize("alpha", [0.9, 0.95, 0.99])
def test_graded_integral_of_power(alpha):
    # int_0^pi sin^alpha = B((alpha+1)/2, 1/2)
    want = special.beta(0.5 * (alpha + 1), 0.5)
    got = graded_integral(lambda y: np.sin(y) ** alpha, 0.0, np.pi)
    assert got == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("alpha", [0.88, 0.95, 1.0])
def test_u_x0_closed_form(alpha):
    want = 0.5 * special.beta(0.5 * (alpha + 1), 0.5)
    assert holder_u_x0(alpha) == pytest.approx(want, rel=1e-12)


def test_u_x0_stable_under_step_halving():
    coarse = holder_u_x0(0.95)
    fine = holder_u_x0(0.95, panels=32, levels=80)
    assert abs(coarse - fine) <= 1e-9


def test_alpha_one_reduces_to_sine():
    g = Grid.for_modes(32)
    p = build_holder_profile(1.0, g)
    x = g.half_points
    assert p.u_alpha_x0 == pytest.approx(1.0, abs=1e-14) and p.c_bar == 0.0
    assert np.allclose(p.half["omega"], -np.sin(x), atol=1e-15)
    assert np.allclose(p.half["u"], np.sin(x), atol=1e-13)
    assert np.max(np.abs(p.half["F"])) < 1e-13


def test_velocity_samples_solve_poisson():
    # u(x) = int_0^x (u_x(0) - int_0^y |sin|^alpha) dy; check u_x by differencing u
    g = Grid.for_modes(128)
    p = build_holder_profile(0.95, g)
    x, u, ux = g.half_points, p.half["u"], p.half["u_x"]
    mid = 0.5 * (ux[1:] + ux[:-1])
    assert np.max(np.abs(np.diff(u) / np.diff(x) - mid)) < 1e-4
    assert np.max(np.abs(ux[-1] + p.u_alpha_x0)) < 0.05


def test_profile_values():
    g = Grid.for_modes(64)
    for alpha in (0.9, 0.95, 0.99):
        p = build_holder_profile(alpha, g)
        w = p.samples("omega")
        assert np.allclose(w, -np.sign(g.points) * np.abs(np.sin(g.points)) ** alpha)
        assert p.c_bar < 0
        assert np.max(np.abs(p.half["omega_x"])) > 1.0
    x = np.array([np.pi / 2])
    assert background_derivatives(x, 0.91)[0][0] == -1.0


def test_samples_have_correct_parity():
    g = Grid.for_modes(16)
    p = build_holder_profile(0.95, g)
    assert np.allclose(p.samples("omega"), -p.samples("omega")[::-1])
    assert np.allclose(p.samples("u_x"), p.samples("u_x")[::-1])


def test_derivatives_by_finite_differences():
    x = np.linspace(0.2, 2.9, 15)
    h = 1e-5
    for i in range(3):
        f = lambda y: background_derivatives(y, 0.93)[i]  # noqa: E731, B023
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert np.allclose(fd, background_derivatives(x, 0.93)[i + 1], atol=1e-6)


def test_canceled_combination_matches_raw_terms_away_from_zero():
    x = np.linspace(0.3, 3.0, 20)
    alpha = 0.92
    _, w1, w2, _ = background_derivatives(x, alpha)
    raw = (alpha - 1) * w1 - np.sin(x) * (w2 - np.sin(x))
    assert np.allclose(canceled_combination(x, alpha), raw, atol=1e-13)
    h = 1e-6
    fd = (canceled_combination(x + h, alpha) - canceled_combination(x - h, alpha)) / (2 * h)
    assert np.allclose(canceled_combination_dx(x, alpha), fd, atol=1e-8)


def test_residual_lemma_ratios_finite_and_stable():
    g = Grid.for_modes(128)
    rep = verify_residual_lemma(0.95, g)
    assert set(rep) == {"omega_res_0", "omega_res_1", "omega_res_2", "psi_res_0",
                        "psi_res_1", "psi_res_2", "cancellation"}
    assert all(np.isfinite(v) and v > 0 for v in rep.values())
    for key, (_, _, q) in ratio_stability(0.95, g).items():
        assert 0.5 <= q <= 2.0, key


def test_residuals_vanish_as_alpha_tends_to_one():
    g = Grid.for_modes(64)
    sizes = [np.max(np.abs(build_holder_profile(a, g).half["omega_res"]))
             for a in (0.95, 0.99, 0.999)]
    assert sizes[0] > sizes[1] > sizes[2] and sizes[2] < 2e-3


def test_cusp_combination_stays_bounded():
    rep = cusp_check(0.95)
    assert rep["combination_sup"] < 1e-5
    assert np.isfinite(rep["bound_ratio_sup"])
    for key in ("omega_res_xx_sup", "stretch_term_dx_sup", "sin_res_xx_dx_sup"):
        assert rep[key] > 1e6 * rep["combination_sup"]


@pytest.mark.parametrize("alpha", [0.875, 0.5, 1.1])
def test_rejects_alpha_outside_range(alpha):
    with pytest.raises(UnsupportedParameterError):
        build_holder_profile(alpha, Grid.for_modes(8))


def test_residual_bounds_reject_alpha_one():
    with pytest.raises(UnsupportedParameterError):
        verify_residual_lemma(1.0)


def test_csv_export(tmp_path):
    g = Grid.for_modes(8)
    path = tmp_path / "holder.csv"
    build_holder_profile(0.95, g).to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["x", "omega", "omega_x"]
    assert len(rows) == g.size + 1
    assert float(rows[1][0]) == pytest.approx(g.points[0])
