"""Command-line entry points: verify, profile, evolve, spectrum, sweep, report.

Every command writes into one run directory: a ``run.json`` record written
atomically at the end, plus command-specific artifacts.  A run that fails
after validation leaves a ``FAILED`` marker carrying the error and the last
diagnostics row.  Exit status is 0 for the verdicts in ``SUCCESS_VERDICTS``,
1 for failed or inconclusive runs and 2 for invalid configurations.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (SERIES_COLUMNS, PhysicalState, Regime, RescaledState, detect_blowup,
                       evolve_physical, evolve_rescaled, flatness, tau_derivative)
from .errors import (ConfigurationError, NonConvergenceError, NumericError, PjlabError,
                     UsageError)
from .holder import KAPPA, build_holder_profile, cusp_check, verify_residual_lemma
from .operators import (TridiagonalOperator, apply_L1_physical, damping_audit, tilde_matrix,
                        truncated_spectrum)
from .profiles import load_profile, profile_estimates, solve_profile
from .spectral import Grid, OddField, recover_velocity, sine_synth
from .weighted import (EnergyConfig, h_inner_quadrature, h_norm, tilde_basis,
                       weighted_identity_defect)

__all__ = ["RunConfig", "validate", "execute", "build_parser", "main", "initial_field",
           "SUCCESS_VERDICTS", "OUTPUT_ENV"]

OUTPUT_ENV = "PJLAB_OUTPUT_ROOT"
DEFAULT_ROOT = "pjlab-runs"
SUCCESS_VERDICTS = frozenset({"completed", "converged", "decay-confirmed", "blowup-confirmed"})
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MAX_SWEEP_RUNS = 1000
MAX_SAMPLES = 1_000_000
INIT_NAMES = ("steady", "steady-perturbed", "steady-perturbed-balanced",
              "holder-perturbation", "zero", "random")


@dataclass
class RunConfig:
    """Parameters of one command invocation (unused fields keep their defaults)."""

    command: str
    a: float = 1.0
    nu: float = 0.0
    alpha: float = 1.0
    modes: int = 128
    grid_size: int | None = None
    mode: str = "rescaled"
    dt: float | None = None
    t_max: float | None = None
    tau_max: float | None = None
    sample_dt: float = 0.5
    init: str = "steady"
    beta: float = 0.1
    c0: float | None = None
    mu: float = 2.0
    mu1: float = 0.1
    k0: int = 4
    seed: int = 0
    max_steps: int = 10_000_000
    window_fraction: float = 0.25
    r2_min: float = 0.999
    flat_tol: float = 0.05
    holder: bool = False
    max_k: int = 100_000
    table_rows: int = 10
    corrupt: list | None = None
    kind: str = "profile"
    a_values: list | None = None
    nu_values: list | None = None
    modes_values: list | None = None
    alpha_values: list | None = None
    workers: int = 1
    output: str | None = None

    @classmethod
    def from_namespace(cls, ns):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in vars(ns).items() if k in names})

    def echo(self):
        return dataclasses.asdict(self)

    def energy(self):
        return EnergyConfig(mu=self.mu, mu1=self.mu1, k0=self.k0)

    def grid(self):
        return Grid.for_modes(self.modes, self.grid_size)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _need(cond, message):
    if not cond:
        raise ConfigurationError(message)


def _finite(name, value):
    _need(value is not None and math.isfinite(value), f"{name} must be a finite number")


def validate(cfg):
    """Check every numeric range before any computation; raises ConfigurationError."""
    for name in ("a", "nu", "alpha", "beta", "mu", "mu1", "sample_dt"):
        _finite(name, getattr(cfg, name))
    _need(cfg.modes >= 4, f"modes must be >= 4, got {cfg.modes}")
    _need(cfg.modes <= 4096, f"modes must be <= 4096, got {cfg.modes}")
    if cfg.grid_size is not None:
        _need(cfg.grid_size % 2 == 0 and cfg.grid_size >= 3 * cfg.modes,
              f"grid size must be even and >= 3*modes, got {cfg.grid_size}")
    cfg.energy()
    cmd = cfg.command
    if cmd == "verify":
        _need(cfg.max_k >= 1, f"max-k must be >= 1, got {cfg.max_k}")
        _need(cfg.table_rows >= 0, "table-rows must be >= 0")
        if cfg.corrupt is not None:
            _need(len(cfg.corrupt) == 2 and cfg.corrupt[0] >= 1,
                  "corrupt takes K DELTA with K >= 1")
    elif cmd == "profile":
        if cfg.holder:
            _need(KAPPA < cfg.alpha <= 1.0, f"alpha must lie in (7/8, 1], got {cfg.alpha}")
        else:
            _need(abs(1.0 - cfg.a) <= 0.1, f"|1 - a| must be <= 0.1, got a = {cfg.a}")
            _init_kind(cfg)
    elif cmd == "spectrum":
        _need(abs(1.0 - cfg.a) <= 0.2, f"|1 - a| must be <= 0.2, got a = {cfg.a}")
        _need(cfg.modes <= 1024, "spectrum is limited to modes <= 1024")
    elif cmd == "evolve":
        _validate_evolve(cfg)
    elif cmd == "sweep":
        _validate_sweep(cfg)
    else:
        raise ConfigurationError(f"unknown command {cmd!r}")


def _validate_evolve(cfg):
    _need(cfg.mode in ("physical", "rescaled", "holder"),
          f"mode must be physical, rescaled or holder, got {cfg.mode!r}")
    _need(cfg.nu >= 0, f"nu must be >= 0, got {cfg.nu}")
    _need(cfg.sample_dt > 0, "sample-dt must be positive")
    _need(cfg.dt is None or (math.isfinite(cfg.dt) and cfg.dt > 0), "dt must be positive")
    _need(cfg.max_steps >= 1, "max-steps must be >= 1")
    _need(0 < cfg.window_fraction <= 1, "window-fraction must lie in (0, 1]")
    if cfg.mode == "physical":
        _need(cfg.t_max is not None and cfg.t_max > 0, "physical runs need --t-max > 0")
        horizon = cfg.t_max
    else:
        _need(cfg.tau_max is not None and cfg.tau_max > 0, "rescaled runs need --tau-max > 0")
        horizon = cfg.tau_max
    _need(horizon / cfg.sample_dt <= MAX_SAMPLES, "too many diagnostics samples")
    if cfg.mode == "holder":
        _need(cfg.a == 1.0 and cfg.nu == 0.0, "holder mode requires a = 1 and nu = 0")
        _need(KAPPA < cfg.alpha <= 1.0, f"alpha must lie in (7/8, 1], got {cfg.alpha}")
    if cfg.mode == "rescaled" and cfg.nu > 0:
        c0 = cfg.c0 if cfg.c0 is not None else (cfg.a - 1.0) ** 2
        _need(c0 > 0, "viscous rescaled runs need C_omega(0) > 0 (set --c0 when a = 1)")
    elif cfg.c0 is not None:
        _need(cfg.c0 > 0, "c0 must be positive")
    _init_kind(cfg)


def _validate_sweep(cfg):
    _need(cfg.kind in ("profile", "evolve", "spectrum"),
          f"sweep kind must be profile, evolve or spectrum, got {cfg.kind!r}")
    _need(cfg.workers >= 1, "workers must be >= 1")
    lists = [cfg.a_values, cfg.nu_values, cfg.modes_values, cfg.alpha_values]
    for values in lists:
        _need(values is None or len(values) > 0, "sweep value lists must be non-empty")
    _need(any(v for v in lists), "a sweep needs at least one value list")
    count = math.prod(len(v) for v in lists if v)
    _need(count <= MAX_SWEEP_RUNS, f"sweep of {count} runs exceeds {MAX_SWEEP_RUNS}")
    for child in _sweep_children(cfg):
        validate(child)


def _init_kind(cfg):
    name = cfg.init
    holder = cfg.command == "evolve" and cfg.mode == "holder"
    if name.startswith("profile:"):
        path = Path(name[len("profile:"):])
        _need(not holder, "holder runs evolve a perturbation; profile initial data is not allowed")
        _need(path.is_file(), f"profile file {path} does not exist")
        try:
            with open(path) as fh:
                count = len(json.load(fh)["coeffs"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"profile file {path} is not a profile record: {exc}")
        _need(count <= cfg.modes, f"profile has {count} modes but --modes is {cfg.modes}")
        return "profile"
    _need(name in INIT_NAMES, f"unknown initial data {name!r}; choose from "
          f"{', '.join(INIT_NAMES)} or profile:<path>")
    if holder:
        _need(name in ("holder-perturbation", "zero", "random"),
              "holder runs accept holder-perturbation, zero or random initial data")
    else:
        _need(name not in ("holder-perturbation", "zero"),
              f"{name} initial data is only meaningful in holder mode")
    return name


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _balanced_bump(x):
    # vanishes like x^3 at the origin and has zero velocity slope there
    s = np.sin(x)
    return s**3 * (1.0 - 1.25 * s * s)


def _random_perturbation(grid, rng, count=16):
    k = np.arange(2, min(count, grid.modes) + 1)
    p = np.zeros(grid.modes)
    p[k - 1] = rng.standard_normal(len(k)) / k.astype(float) ** 4
    p[0] = -float(k @ p[k - 1])
    return p / np.max(np.abs(p))


def initial_field(cfg, grid):
    """Initial OddField named by ``cfg.init`` (a perturbation in holder mode)."""
    name = _init_kind(cfg)
    if name == "profile":
        prof = load_profile(cfg.init[len("profile:"):], grid)
        return prof.omega
    steady = OddField(-np.eye(1, grid.modes, 0).ravel(), grid)
    if name == "steady":
        return steady
    if name == "steady-perturbed":
        return steady + cfg.beta * OddField.from_function(lambda x: np.sin(x) ** 3, grid)
    if name in ("steady-perturbed-balanced", "holder-perturbation"):
        bump = cfg.beta * OddField.from_function(_balanced_bump, grid)
        return bump if name == "holder-perturbation" else steady + bump
    if name == "zero":
        return OddField.zeros(grid)
    rng = np.random.default_rng(cfg.seed)
    pert = OddField(cfg.beta * _random_perturbation(grid, rng), grid)
    return pert if cfg.mode == "holder" and cfg.command == "evolve" else steady + pert


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return str(obj)


def write_json_atomic(path, obj):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable, allow_nan=True)
    os.replace(tmp, path)


def config_digest(cfg):
    echo = cfg.echo()
    echo.pop("output", None)
    return hashlib.sha256(json.dumps(echo, sort_keys=True, default=str).encode()).hexdigest()[:10]


def run_directory(cfg):
    if cfg.output:
        return Path(cfg.output)
    root = Path(os.environ.get(OUTPUT_ENV, DEFAULT_ROOT))
    return root / f"{cfg.command}-{config_digest(cfg)}"


class _CsvStream:
    """Append-only CSV with a fixed header, flushed per row."""

    def __init__(self, path, header):
        self.path = Path(path)
        self.fh = open(self.path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(header)
        self.fh.flush()

    def write(self, values):
        self.writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                              for v in values])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _write_csv(path, header, rows):
    stream = _CsvStream(path, header)
    for row in rows:
        stream.write(row)
    stream.close()


class RunFailure(Exception):
    """A failure after validation; carries what the FAILED marker should record."""

    def __init__(self, message, last_row=None, extra=None):
        super().__init__(message)
        self.last_row = last_row
        self.extra = extra or {}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _verify_checks(cfg):
    rng = np.random.default_rng(cfg.seed)
    checks = []

    def record(name, ok, detail):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    grid = Grid.for_modes(64)
    worst_rt = worst_ux0 = 0.0
    nodes, weights = np.polynomial.legendre.leggauss(200)
    y = 0.5 * np.pi * (nodes + 1.0)
    for _ in range(20):
        a = rng.standard_normal(32) / np.arange(1, 33) ** 3
        f = OddField(a, grid)
        vel = recover_velocity(f)
        worst_rt = max(worst_rt, float(np.max(np.abs(vel.u.derivative(2).coeffs - f.coeffs))))
        quad = float(np.sum(0.5 * np.pi * weights * (y - np.pi) * f.evaluate(y))) / np.pi
        worst_ux0 = max(worst_ux0, abs(quad - vel.u_x0))
    record("velocity roundtrip u_xx = omega", worst_rt <= 1e-12, f"max error {worst_rt:.3e}")
    record("u_x(0) spectral vs quadrature", worst_ux0 <= 1e-10, f"max error {worst_ux0:.3e}")

    worst_id = 0.0
    for _ in range(20):
        a = rng.standard_normal(24) / np.arange(1, 25) ** 3
        a[0] = -float(np.arange(2, 25) @ a[1:])
        worst_id = max(worst_id, abs(weighted_identity_defect(OddField(a, grid))[0]))
    record("weighted transport identity", worst_id <= 1e-8, f"max defect {worst_id:.3e}")

    worst_on = 0.0
    for k in range(1, 9):
        for j in range(1, 9):
            q = h_inner_quadrature(tilde_basis(k, grid), tilde_basis(j, grid))
            worst_on = max(worst_on, abs(q - (k == j)))
    record("tilde basis orthonormal (quadrature)", worst_on <= 1e-10, f"max error {worst_on:.3e}")

    n = 64
    diff = float(np.max(np.abs(tilde_matrix(apply_L1_physical, n)
                                - TridiagonalOperator(n).matrix())))
    record("L1 physical vs tridiagonal, k <= 64", diff <= 1e-10, f"max difference {diff:.3e}")

    g8 = Grid.for_modes(8)
    img = apply_L1_physical(OddField.from_function(lambda x: np.sin(2 * x), g8)).coeffs
    expected = np.zeros(8)
    expected[0], expected[2] = 9.0 / 8.0, -3.0 / 8.0
    err = float(np.max(np.abs(img - expected)))
    record("L1 sin(2x) = 9/8 sin(x) - 3/8 sin(3x)", err <= 1e-12, f"max error {err:.3e}")
    return checks


def cmd_verify(cfg, run_dir):
    corrupt = tuple(int(v) for v in cfg.corrupt) if cfg.corrupt else None
    t0 = time.perf_counter()
    report = damping_audit(cfg.max_k, table_rows=cfg.table_rows, corrupt=corrupt)
    audit_time = time.perf_counter() - t0
    rows = [(k, m.numerator, m.denominator, float(m)) for k, m, _ in report.defect_table]
    _write_csv(run_dir / "margins.csv", ["k", "numerator", "denominator", "margin"], rows)
    print(f"{'k':>8}  {'margin d_(k+1) - d_k - 1/2':>30}  {'float':>12}")
    for k, num, den, val in rows:
        print(f"{k:>8}  {f'{num}/{den}':>30}  {val:>12.6e}")
    checks = [{"check": f"damping margins positive and closed form, k <= {cfg.max_k}",
               "ok": report.ok,
               "detail": "ok" if report.ok else
               "failing k: " + ", ".join(f"{k} ({why})" for k, why in report.failures[:20])}]
    checks += _verify_checks(cfg)
    for c in checks:
        print(f"[{'PASS' if c['ok'] else 'FAIL'}] {c['check']}: {c['detail']}")
    ok = all(c["ok"] for c in checks)
    meta = {"checks": checks, "audit_seconds": audit_time,
            "max_rayleigh": report.max_rayleigh, "corrupt": corrupt}
    return ("completed" if ok else "checks-failed"), meta, ["margins.csv"]


def cmd_profile(cfg, run_dir):
    if cfg.holder:
        return _holder_profile(cfg, run_dir)
    init = None
    if cfg.init.startswith("profile:"):
        init = load_profile(cfg.init[len("profile:"):]).omega.coeffs
    try:
        r = solve_profile(cfg.a, cfg.modes, init=init, M=cfg.grid_size)
    except NonConvergenceError as exc:
        last = exc.last_iterate.coeffs.tolist() if exc.last_iterate is not None else None
        raise RunFailure(str(exc), extra={"last_iterate": last, "history": exc.history}) from exc
    r.save(run_dir / "profile.json")
    est = profile_estimates(r)
    print(f"a = {r.a}: c = {r.c:.12g}, residual {r.residual_sup:.3e}, "
          f"{r.newton_iters} Newton iterations")
    meta = {"c": r.c, "residual_sup": r.residual_sup, "newton_iters": r.newton_iters,
            "history": r.history, "estimates": est,
            "blowup_time": (-1.0 / r.c) if r.c < 0 else None}
    return "converged", meta, ["profile.json"]


def _holder_profile(cfg, run_dir):
    prof = build_holder_profile(cfg.alpha, cfg.grid())
    prof.to_csv(run_dir / "holder_profile.csv")
    meta = {"alpha": prof.alpha, "u_alpha_x0": prof.u_alpha_x0, "c_bar": prof.c_bar}
    if cfg.alpha < 1.0:
        meta["residual_ratios"] = verify_residual_lemma(cfg.alpha, cfg.grid())
        meta["cusp"] = cusp_check(cfg.alpha)
    print(f"alpha = {prof.alpha}: u_x(0) = {prof.u_alpha_x0:.15g}, c_bar = {prof.c_bar:.6g}")
    return "completed", meta, ["holder_profile.csv"]


def cmd_spectrum(cfg, run_dir):
    spec = truncated_spectrum(cfg.a, cfg.modes)
    _write_csv(run_dir / "spectrum.csv", ["re", "im", "N", "a"],
               [(lam.real, lam.imag, cfg.modes, cfg.a) for lam, _ in spec])
    top = spec[0][0].real
    meta = {"max_real_part": top, "max_defect": max(d for _, d in spec)}
    if cfg.a != 1.0:
        meta["fitted_constant"] = (top + 0.5) / abs(1.0 - cfg.a)
    print(f"a = {cfg.a}, N = {cfg.modes}: max real part {top:.10g}")
    return "completed", meta, ["spectrum.csv"]


def _regime(cfg):
    if cfg.mode == "holder":
        return Regime(1.0, 0.0, cfg.alpha, "holder")
    return Regime(cfg.a, cfg.nu, 1.0, "viscous" if cfg.nu > 0 else "inviscid")


def cmd_evolve(cfg, run_dir):
    grid = cfg.grid()
    omega = initial_field(cfg, grid)
    regime = _regime(cfg)
    series = _CsvStream(run_dir / "series.csv", SERIES_COLUMNS)
    files = ["series.csv"]
    last = {}

    def on_row(row):
        series.write(row.as_row())
        last["row"] = dict(zip(SERIES_COLUMNS, row.as_row()))

    kwargs = dict(dt_max=cfg.dt, sample_dt=cfg.sample_dt, cfg=cfg.energy(),
                  max_steps=cfg.max_steps, on_row=on_row)
    rate = None
    try:
        if cfg.mode == "physical":
            state = PhysicalState(omega, 0.0, regime)
            result = evolve_physical(state, cfg.t_max, **kwargs)
        else:
            if cfg.c0 is not None:
                c0 = cfg.c0
            else:
                c0 = (cfg.a - 1.0) ** 2 if regime.mode == "viscous" else 1.0
            state = RescaledState(omega, c0, 0.0, 0.0, regime)
            rate = _CsvStream(run_dir / "rate.csv", ["tau", "h_norm_tau_derivative"])
            files.append("rate.csv")

            def on_state(s):
                rate.write([s.tau, h_norm(tau_derivative(s))])

            result = evolve_rescaled(state, cfg.tau_max, on_state=on_state, **kwargs)
    except (NumericError, PjlabError) as exc:
        extra = {}
        bad = getattr(exc, "state", None)
        if bad is not None:
            extra["last_good_coeffs"] = bad.omega.coeffs.tolist()
        raise RunFailure(str(exc), last_row=last.get("row"), extra=extra) from exc
    finally:
        series.close()
        if rate is not None:
            rate.close()

    final = result.state
    meta = {"steps": result.steps, "events": result.events,
            "renormalizations": len(result.events), "samples": len(result.rows),
            "final_row": last.get("row")}
    endpoint = {"a": regime.a, "c": result.rows[-1].c_omega, "N": grid.modes,
                "coeffs": final.omega.coeffs.tolist()}
    if cfg.mode == "physical":
        verdict, analysis = _physical_verdict(cfg, result.rows)
        meta["analysis"] = analysis
        endpoint.update(t=final.t, residual_sup=float("nan"), newton_iters=0)
    else:
        defect = h_norm(tau_derivative(final))
        meta.update(C_omega=final.C_omega, t_phys=final.t_phys,
                    endpoint_tau_derivative_h=defect)
        endpoint.update(tau=final.tau, C_omega=final.C_omega, residual_sup=defect,
                        newton_iters=0)
        if regime.mode == "holder":
            # the perturbation endpoint approximates a profile; it is not a solve
            endpoint.update(alpha=regime.alpha, label="candidate profile")
        verdict = "completed"
    write_json_atomic(run_dir / "endpoint.json", endpoint)
    files.append("endpoint.json")
    print(f"evolve {cfg.mode}: {result.steps} steps, verdict {verdict}")
    return verdict, meta, files


def _physical_verdict(cfg, rows):
    if len(rows) < 20:
        return "completed", {"note": "fewer than 20 samples; no blow-up analysis"}
    v = detect_blowup(rows, window_fraction=cfg.window_fraction, r2_min=cfg.r2_min,
                      flat_tol=cfg.flat_tol)
    analysis = {"kind": v.kind, "T_estimate": v.T_estimate, "fit_r2": v.fit_r2,
                "slope": v.slope, "flatness": v.flatness, "window": list(v.window)}
    verdict = {"blowup": "blowup-confirmed", "global_decay": "decay-confirmed"}.get(
        v.kind, "inconclusive")
    return verdict, analysis


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_children(cfg):
    axes = {
        "a": cfg.a_values or [cfg.a],
        "nu": cfg.nu_values or [cfg.nu],
        "modes": cfg.modes_values or [cfg.modes],
        "alpha": cfg.alpha_values or [cfg.alpha],
    }
    base = dataclasses.replace(cfg, command=cfg.kind, a_values=None, nu_values=None,
                               modes_values=None, alpha_values=None, workers=1)
    out = []
    for i, (a, nu, modes, alpha) in enumerate(itertools.product(*axes.values())):
        out.append(dataclasses.replace(base, a=float(a), nu=float(nu), modes=int(modes),
                                       alpha=float(alpha), output=f"run-{i:03d}"))
    return out


SUMMARY_COLUMNS = ("run", "a", "nu", "N", "alpha", "exit_code", "verdict", "c", "w_ratio",
                   "c_ratio", "T_estimate", "fit_r2", "error")


def _sweep_child(args):
    child, run_dir = args
    child = dataclasses.replace(child, output=str(run_dir))
    code = execute(child, quiet=True)
    row = {"run": Path(run_dir).name, "a": child.a, "nu": child.nu, "N": child.modes,
           "alpha": child.alpha, "exit_code": code}
    try:
        with open(Path(run_dir) / "run.json") as fh:
            rec = json.load(fh)
    except (OSError, ValueError) as exc:
        row.update(verdict="failed", error=str(exc))
        return row
    meta = rec.get("metadata", {})
    est = meta.get("estimates") or {}
    analysis = meta.get("analysis") or {}
    c = meta.get("c")
    if c is None and meta.get("final_row"):
        c = meta["final_row"].get("c_omega")
    row.update(verdict=rec.get("verdict"), c=c, w_ratio=est.get("w_ratio"),
               c_ratio=est.get("c_ratio"), T_estimate=analysis.get("T_estimate"),
               fit_r2=analysis.get("fit_r2"), error=rec.get("error"))
    return row


def _ratio_table(rows):
    """Pairs (eps, eps/2) among converged profile runs at equal N and sign of 1 - a."""
    done = [r for r in rows if r.get("exit_code") == EXIT_OK and r.get("w_ratio") is not None]
    table = []
    for r1 in done:
        eps = 1.0 - r1["a"]
        for r2 in done:
            if r2["N"] == r1["N"] and math.isclose(1.0 - r2["a"], 0.5 * eps, rel_tol=1e-9,
                                                   abs_tol=1e-12):
                qw = r2["w_ratio"] / r1["w_ratio"]
                qc = r2["c_ratio"] / r1["c_ratio"]
                table.append((r1["N"], eps, r1["w_ratio"], r2["w_ratio"], qw,
                              r1["c_ratio"], r2["c_ratio"], qc,
                              0.5 <= qw <= 2.0 and 0.5 <= qc <= 2.0))
    return table


def cmd_sweep(cfg, run_dir):
    children = _sweep_children(cfg)
    jobs = [(child, run_dir / child.output) for child in children]
    if cfg.workers == 1:
        rows = [_sweep_child(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_child, jobs))
    _write_csv(run_dir / "sweep_summary.csv", SUMMARY_COLUMNS,
               [[r.get(k) for k in SUMMARY_COLUMNS] for r in rows])
    files = ["sweep_summary.csv"] + [f"{child.output}/run.json" for child in children]
    meta = {"runs": len(rows), "failed": sum(r["exit_code"] != EXIT_OK for r in rows)}
    if cfg.kind == "profile":
        table = _ratio_table(rows)
        _write_csv(run_dir / "ratio_table.csv",
                   ["N", "eps", "w_ratio_eps", "w_ratio_half", "w_quotient",
                    "c_ratio_eps", "c_ratio_half", "c_quotient", "stable"], table)
        files.append("ratio_table.csv")
        signs = [r for r in rows if r.get("c") is not None]
        meta["sign_trichotomy"] = all(
            np.sign(r["c"]) == np.sign(round(1.0 - r["a"], 12)) or abs(r["c"]) < 1e-12
            for r in signs)
    print(f"sweep of {len(rows)} runs, {meta['failed']} failed")
    verdict = "completed" if meta["failed"] == 0 else "completed-with-failures"
    return verdict, meta, files


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader]
    return header, rows


def _columns(path):
    header, rows = _read_csv(path)
    out = {h: [] for h in header}
    for r in rows:
        for h, v in zip(header, r):
            out[h].append(v)
    return out


def _floats(values):
    return np.array([float(v) if v not in ("", "None") else np.nan for v in values])


def _two_column(path, x, y):
    np.savetxt(path, np.column_stack([x, y]), fmt="%.17g")


EXPECTED_HEADERS = {
    "series.csv": list(SERIES_COLUMNS),
    "spectrum.csv": ["re", "im", "N", "a"],
    "sweep_summary.csv": list(SUMMARY_COLUMNS),
}


def cmd_report(run_dir):
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "run.json") as fh:
            rec = json.load(fh)
    except OSError:
        print(f"missing manifest: {run_dir / 'run.json'} not found", file=sys.stderr)
        return EXIT_FAIL
    problems = []
    for name in rec.get("files", []):
        path = run_dir / name
        if not path.is_file():
            problems.append(f"missing file {name}")
            continue
        try:
            if name.endswith(".json"):
                with open(path) as fh:
                    json.load(fh)
            elif name.endswith(".csv"):
                header, _ = _read_csv(path)
                want = EXPECTED_HEADERS.get(Path(name).name)
                if want is not None and header != want:
                    problems.append(f"{name} has header {header}, expected {want}")
        except (ValueError, StopIteration) as exc:
            problems.append(f"{name} does not parse: {exc}")
    cmd = rec.get("command")
    meta = rec.get("metadata", {})
    lines = [f"command: {cmd}", f"verdict: {rec.get('verdict')}",
             f"code version: {rec.get('code_version')}",
             f"started: {rec.get('started')}  finished: {rec.get('finished')}"]
    captions = {}
    try:
        if cmd == "verify" and (run_dir / "margins.csv").is_file():
            header, rows = _read_csv(run_dir / "margins.csv")
            lines.append("margin table (k, d_(k+1) - d_k - 1/2):")
            lines += [f"  {r[0]:>8}  {r[1]}/{r[2]}  {float(r[3]):.6e}" for r in rows]
            lines += [f"  [{'PASS' if c['ok'] else 'FAIL'}] {c['check']}: {c['detail']}"
                      for c in meta.get("checks", [])]
        elif cmd == "evolve" and (run_dir / "series.csv").is_file():
            cols = _columns(run_dir / "series.csv")
            t, tau = _floats(cols["t"]), _floats(cols["tau"])
            sup = _floats(cols["sup_omega"])
            if rec["config"]["mode"] == "physical":
                _two_column(run_dir / "plot_t_inverse_sup.dat", t, 1.0 / sup)
                _two_column(run_dir / "plot_t_sup_times_t.dat", t, sup * t)
                captions["plot_t_inverse_sup.dat"] = (
                    "t vs 1/sup|omega|; linear with root T for self-similar blow-up")
                captions["plot_t_sup_times_t.dat"] = "t vs t*sup|omega|; flat for O(1/t) decay"
                an = meta.get("analysis", {})
                lines.append(f"T_estimate: {an.get('T_estimate')}  fit_r2: {an.get('fit_r2')}")
                pos = t > 0
                if np.count_nonzero(pos) > 1:
                    lines.append(f"sup|omega|*t flatness (t > 0): {flatness(t[pos], sup[pos]):.6g}"
                                 f"  (tail window: {an.get('flatness')})")
            else:
                _two_column(run_dir / "plot_tau_h_norm.dat", tau, _floats(cols["h_norm"]))
                _two_column(run_dir / "plot_tau_c_omega.dat", tau, _floats(cols["c_omega"]))
                captions["plot_tau_h_norm.dat"] = "tau vs H norm of the perturbation (log scale)"
                captions["plot_tau_c_omega.dat"] = "tau vs scaling rate c_omega"
                if (run_dir / "rate.csv").is_file():
                    rc = _columns(run_dir / "rate.csv")
                    rt, rv = _floats(rc["tau"]), _floats(rc["h_norm_tau_derivative"])
                    _two_column(run_dir / "plot_tau_rate.dat", rt, rv)
                    captions["plot_tau_rate.dat"] = (
                        "tau vs H norm of the tau-derivative (log scale)")
                    good = rv > 0
                    if np.count_nonzero(good) > 2:
                        slope = np.polyfit(rt[good], np.log(rv[good]), 1)[0]
                        lines.append(f"fitted exponential rate of the tau-derivative: {-slope:.6g}")
                lines.append(f"final c_omega: {cols['c_omega'][-1]}  "
                             f"C_omega: {meta.get('C_omega')}  t_phys: {meta.get('t_phys')}")
        elif cmd == "profile" and (run_dir / "profile.json").is_file():
            with open(run_dir / "profile.json") as fh:
                prof = json.load(fh)
            grid = Grid.for_modes(len(prof["coeffs"]))
            x = grid.half_points
            _two_column(run_dir / "plot_profile.dat", x, sine_synth(np.array(prof["coeffs"]),
                                                                    grid.half))
            captions["plot_profile.dat"] = "x vs omega_a(x) on (0, pi)"
            est = meta.get("estimates", {})
            lines.append(f"c = {prof['c']}  residual = {prof['residual_sup']}  "
                         f"w_ratio = {est.get('w_ratio')}  c_ratio = {est.get('c_ratio')}")
        elif cmd == "spectrum" and (run_dir / "spectrum.csv").is_file():
            cols = _columns(run_dir / "spectrum.csv")
            _two_column(run_dir / "plot_spectrum.dat", _floats(cols["re"]), _floats(cols["im"]))
            captions["plot_spectrum.dat"] = "eigenvalues of the truncated linearization (re, im)"
            lines.append(f"max real part: {meta.get('max_real_part')}")
        elif cmd == "sweep" and (run_dir / "sweep_summary.csv").is_file():
            cols = _columns(run_dir / "sweep_summary.csv")
            _two_column(run_dir / "plot_a_c.dat", _floats(cols["a"]), _floats(cols["c"]))
            captions["plot_a_c.dat"] = "a vs scaling rate c"
            lines.append(f"runs: {meta.get('runs')}  failed: {meta.get('failed')}  "
                         f"sign trichotomy: {meta.get('sign_trichotomy')}")
    except (KeyError, ValueError, IndexError) as exc:
        problems.append(f"could not build plot data: {exc}")
    if (run_dir / "FAILED").is_file():
        lines.append("run left a FAILED marker")
    lines += [f"problem: {p}" for p in problems]
    text = "\n".join(lines) + "\n"
    (run_dir / "report.txt").write_text(text)
    write_json_atomic(run_dir / "captions.json", captions)
    print(text, end="")
    return EXIT_FAIL if problems else EXIT_OK


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

COMMANDS = {"verify": cmd_verify, "profile": cmd_profile, "evolve": cmd_evolve,
            "spectrum": cmd_spectrum, "sweep": cmd_sweep}


def execute(cfg, quiet=False):
    """Validate, run and record one command; returns the exit status."""
    try:
        validate(cfg)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run_dir = run_directory(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in ("FAILED", "run.json"):
        (run_dir / stale).unlink(missing_ok=True)
    record = {"command": cfg.command, "config": cfg.echo(), "code_version": __version__,
              "started": _now()}
    stdout = sys.stdout
    if quiet:
        sys.stdout = open(os.devnull, "w")
    try:
        verdict, meta, files = COMMANDS[cfg.command](cfg, run_dir)
        error = None
    except (RunFailure, PjlabError) as exc:
        verdict, files, error = "failed", [], str(exc)
        meta = getattr(exc, "extra", {})
        marker = {"error": error, "last_row": getattr(exc, "last_row", None), **meta}
        write_json_atomic(run_dir / "FAILED", marker)
        print(f"error: {error}", file=sys.stderr)
    finally:
        if quiet:
            sys.stdout.close()
            sys.stdout = stdout
    code = EXIT_OK if verdict in SUCCESS_VERDICTS else EXIT_FAIL
    present = [f for f in files if (run_dir / f).is_file()]
    record.update(finished=_now(), verdict=verdict, exit_code=code, files=present,
                  metadata=meta, error=error)
    write_json_atomic(run_dir / "run.json", record)
    if not quiet:
        print(f"run directory: {run_dir}")
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="pjlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pjlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--output", help=f"run directory (default: ${OUTPUT_ENV} or "
                                         f"./{DEFAULT_ROOT}, plus a config digest)")
        sp.add_argument("--seed", type=int, default=0)

    def model(sp):
        sp.add_argument("--a", type=float, default=1.0, help="stretching parameter")
        sp.add_argument("--nu", type=float, default=0.0, help="viscosity")
        sp.add_argument("--alpha", type=float, default=1.0, help="Holder exponent")
        sp.add_argument("--modes", type=int, default=128, help="number of sine modes N")
        sp.add_argument("--grid-size", type=int, help="collocation points M (even, >= 3N)")

    def energy(sp):
        sp.add_argument("--mu", type=float, default=2.0)
        sp.add_argument("--mu1", type=float, default=0.1)
        sp.add_argument("--k0", type=int, default=4)

    def evolution(sp):
        sp.add_argument("--mode", choices=("physical", "rescaled", "holder"), default="rescaled")
        sp.add_argument("--dt", type=float, help="largest time step (the CFL limit also applies)")
        sp.add_argument("--t-max", type=float)
        sp.add_argument("--tau-max", type=float)
        sp.add_argument("--sample-dt", type=float, default=0.5)
        sp.add_argument("--c0", type=float, help="initial scale factor C_omega(0)")
        sp.add_argument("--max-steps", type=int, default=10_000_000)
        sp.add_argument("--window-fraction", type=float, default=0.25)
        sp.add_argument("--r2-min", type=float, default=0.999)
        sp.add_argument("--flat-tol", type=float, default=0.05)

    def initial(sp, default):
        sp.add_argument("--init", default=default,
                        help=f"{', '.join(INIT_NAMES)} or profile:<path>")
        sp.add_argument("--beta", type=float, default=0.1, help="perturbation amplitude")

    sp = sub.add_parser("verify", help="identity and exact damping-margin suite")
    common(sp)
    sp.add_argument("--max-k", type=int, default=100_000)
    sp.add_argument("--table-rows", type=int, default=10)
    sp.add_argument("--corrupt", type=int, nargs=2, metavar=("K", "DELTA"),
                    help="negative control: add DELTA to the numerator of d_K")

    sp = sub.add_parser("profile", help="Newton solve for a self-similar profile")
    common(sp), model(sp), energy(sp), initial(sp, "steady")
    sp.add_argument("--holder", action="store_true",
                    help="sample the Holder background at --alpha instead")

    sp = sub.add_parser("evolve", help="time integration with diagnostics")
    common(sp), model(sp), energy(sp), evolution(sp), initial(sp, "steady")

    sp = sub.add_parser("spectrum", help="eigenvalues of the truncated linearization")
    common(sp), model(sp)

    sp = sub.add_parser("sweep", help="cartesian parameter sweep")
    common(sp), model(sp), energy(sp), evolution(sp), initial(sp, "steady")
    sp.add_argument("--kind", choices=("profile", "evolve", "spectrum"), default="profile")
    sp.add_argument("--a-values", type=float, nargs="+")
    sp.add_argument("--nu-values", type=float, nargs="+")
    sp.add_argument("--modes-values", type=int, nargs="+")
    sp.add_argument("--alpha-values", type=float, nargs="+")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--holder", action="store_true")

    sp = sub.add_parser("report", help="summary and plot data for a run directory")
    sp.add_argument("run_dir")
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    if ns.command == "report":
        return cmd_report(ns.run_dir)
    return execute(RunConfig.from_namespace(ns))


if __name__ == "__main__":
    sys.exit(main())
