"""Command-line runner: configured simulations, reports, and a validation suite.

Modes
-----
cooling   pair collisions only (no bath): algebraic temperature decay.
linear    bath only (tau = 0): relaxation to the bath-driven equilibrium,
          cross-checked against the velocity-grid steady state.
full      pair collisions + bath: driven steady state with bound report.
validate  fast self-check suite, one PASS/FAIL line per invariant.

Config files are strict JSON: every key must be known *and* meaningful for
the requested mode (e.g. bath keys are rejected in cooling mode, ``epsilon``
is rejected in linear mode where pair collisions are switched off).  All
defaults are in ``DEFAULTS``; ``lambda`` is the JSON spelling of the bath
coupling scale.  The initial ensemble is always the standard normal draw
(unit temperature, zero mean) from the run seed, so a (config, seed) pair
pins the entire trajectory bit-for-bit in single-threaded runs.

Exit codes: 0 success, 1 configuration error, 2 temperature-bound violation
beyond the Monte Carlo allowance, 3 numerical fault.  ``GB_LOG`` sets the
log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .background import BathParams, abs_moment, load_table, nu
from .carleman import (
    kernel_closed_form,
    kernel_quadrature,
    make_grid,
    steady_state,
    write_grid_csv,
)
from .dsmc import (
    Ensemble,
    MomentTrajectory,
    NumericalFault,
    ObserverConfig,
    SimConfig,
    TimeStepError,
    detect_steady,
    load_checkpoint,
    run,
    save_checkpoint,
)
from .kinematics import (
    RestitutionParams,
    collide_l_n,
    collide_l_sigma,
    collide_q,
    energy_split_check,
    sphere_average_l,
    sphere_average_q,
)
from .observables import FitRefusedError, bound_params, f_aux_stderr, haff_fit

__all__ = [
    "ConfigError",
    "ParsedConfig",
    "DEFAULTS",
    "MODES",
    "parse_config",
    "serialize_config",
    "execute",
    "run_validation",
    "main",
]

log = logging.getLogger(__name__)

MODES = ("cooling", "linear", "full", "validate")

DEFAULTS: dict = {
    "tau": 1.0,
    "epsilon": 0.8,
    "e": 0.8,
    "m1": 1.0,
    "u1": [0.0, 0.0, 0.0],
    "theta1": 1.0,
    "lambda": 1.0,
    "dt": 0.01,
    "t_end": 30.0,
    "n_particles": 20_000,
    "seed": 12345,
    "record_every": 10,
    "grid": {"nodes": 32, "extent": 8.0},
}

_COMMON_KEYS = ("mode", "seed")
_ALLOWED_KEYS = {
    "cooling": _COMMON_KEYS
    + ("tau", "epsilon", "dt", "t_end", "n_particles", "record_every"),
    "linear": _COMMON_KEYS
    + ("tau", "e", "m1", "u1", "theta1", "lambda", "dt", "t_end",
       "n_particles", "record_every", "grid"),
    "full": _COMMON_KEYS
    + ("tau", "epsilon", "e", "m1", "u1", "theta1", "lambda", "dt", "t_end",
       "n_particles", "record_every", "f1_table"),
    "validate": _COMMON_KEYS,
}


class ConfigError(ValueError):
    """Configuration file violates the schema; the message names the key."""


@dataclass(frozen=True)
class ParsedConfig:
    """A validated configuration: run mode, solver config, output knobs.

    ``normalized`` is the canonical JSON object (all defaults explicit, keys
    in schema order); serializing and re-parsing it reproduces this object.
    """

    mode: str
    sim: SimConfig | None
    record_every: int
    grid_nodes: int
    grid_extent: float
    f1_table: str | None
    normalized: dict


def _as_float(raw: dict, key: str, lo: float | None = None,
              lo_open: bool = False, hi: float | None = None) -> float:
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key {key!r} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"key {key!r} must be finite, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        bound = "greater than" if lo_open else "at least"
        raise ConfigError(f"key {key!r} must be {bound} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"key {key!r} must be at most {hi}, got {value!r}")
    return value


def _as_int(raw: dict, key: str, lo: int, hi: int | None = None) -> int:
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"key {key!r} must be an integer, got {value!r}")
    if value < lo or (hi is not None and value > hi):
        raise ConfigError(f"key {key!r} out of range [{lo}, {hi}], got {value}")
    return value


def parse_config(
    path: str | Path,
    expect_mode: str | None = None,
    seed_override: int | None = None,
) -> ParsedConfig:
    """Load, validate, and normalize a JSON config file."""
    with Path(path).open("r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_config_dict(raw, expect_mode=expect_mode, seed_override=seed_override)


def parse_config_dict(
    raw: dict,
    expect_mode: str | None = None,
    seed_override: int | None = None,
) -> ParsedConfig:
    """Validate a config object (see :func:`parse_config`)."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"key 'mode' must be one of {MODES}, got {mode!r}")
    if expect_mode is not None and mode != expect_mode:
        raise ConfigError(
            f"config file says mode {mode!r} but the command line asked for "
            f"{expect_mode!r}"
        )
    allowed = _ALLOWED_KEYS[mode]
    for key in sorted(raw):
        if key not in allowed:
            if key in set(DEFAULTS) | {"f1_table", "mode"}:
                raise ConfigError(f"key {key!r} is not allowed in {mode} mode")
            raise ConfigError(f"unknown key {key!r}")
    if mode == "full" and "f1_table" in raw:
        for key in ("u1", "theta1"):
            if key in raw:
                raise ConfigError(
                    f"key {key!r} conflicts with 'f1_table' (bulk state is "
                    f"derived from the table)"
                )

    merged = dict(raw)
    for key in allowed:
        if key in ("mode", "f1_table"):
            continue
        merged.setdefault(key, 0.0 if (key, mode) == ("tau", "linear") else DEFAULTS[key])
    if seed_override is not None:
        merged["seed"] = seed_override

    seed = _as_int(merged, "seed", 0, 2**64 - 1)
    normalized: dict = {"mode": mode, "seed": seed}
    if mode == "validate":
        return ParsedConfig(
            mode=mode, sim=None, record_every=1, grid_nodes=0, grid_extent=0.0,
            f1_table=None, normalized=normalized,
        )

    tau = _as_float(merged, "tau", lo=0.0)
    if mode == "cooling" and tau == 0.0:
        raise ConfigError("key 'tau' must be positive in cooling mode")
    if mode == "linear" and tau != 0.0:
        raise ConfigError(f"key 'tau' must be 0 in linear mode, got {tau!r}")
    dt = _as_float(merged, "dt", lo=0.0, lo_open=True)
    t_end = _as_float(merged, "t_end", lo=dt)
    n_particles = _as_int(merged, "n_particles", 2)
    record_every = _as_int(merged, "record_every", 1)

    if mode == "cooling":
        epsilon = _as_float(merged, "epsilon", lo=0.0, lo_open=True, hi=1.0)
        restitution = RestitutionParams(epsilon=epsilon, e=1.0, m1=1.0)
        bath = None
    else:
        e = _as_float(merged, "e", lo=0.0, lo_open=True, hi=1.0)
        m1 = _as_float(merged, "m1", lo=0.0, lo_open=True)
        lambda_ = _as_float(merged, "lambda", lo=0.0, lo_open=True)
        epsilon = (
            _as_float(merged, "epsilon", lo=0.0, lo_open=True, hi=1.0)
            if mode == "full"
            else 1.0
        )
        restitution = RestitutionParams(epsilon=epsilon, e=e, m1=m1)
        if merged.get("f1_table") is not None:
            table_path = merged["f1_table"]
            if not isinstance(table_path, str):
                raise ConfigError(f"key 'f1_table' must be a path string, got {table_path!r}")
            bath = BathParams(
                m1=m1, u1=np.zeros(3), theta1=1.0, lambda_=lambda_,
                kind="tabulated", table=load_table(table_path),
            )
        else:
            u1 = merged["u1"]
            if (not isinstance(u1, (list, tuple)) or len(u1) != 3
                    or any(isinstance(x, bool) or not isinstance(x, (int, float))
                           or not math.isfinite(float(x)) for x in u1)):
                raise ConfigError(f"key 'u1' must be a list of 3 finite numbers, got {u1!r}")
            theta1 = _as_float(merged, "theta1", lo=0.0, lo_open=True)
            bath = BathParams(
                m1=m1, u1=np.asarray(u1, dtype=float), theta1=theta1, lambda_=lambda_,
            )

    grid_nodes, grid_extent = 0, 0.0
    if mode == "linear":
        grid = merged["grid"]
        if not isinstance(grid, dict):
            raise ConfigError(f"key 'grid' must be an object, got {grid!r}")
        for sub in sorted(grid):
            if sub not in ("nodes", "extent"):
                raise ConfigError(f"unknown key 'grid.{sub}'")
        grid = {**DEFAULTS["grid"], **grid}
        grid_nodes = _as_int(grid, "nodes", 4)
        grid_extent = _as_float(grid, "extent", lo=0.0, lo_open=True)
        merged["grid"] = {"nodes": grid_nodes, "extent": grid_extent}

    sim = SimConfig(
        tau=tau, restitution=restitution, bath=bath, dt=dt, t_end=t_end,
        n_particles=n_particles, seed=seed,
    )
    for key in allowed:
        if key in ("mode", "seed"):
            continue
        if key == "f1_table":
            if merged.get("f1_table") is not None:
                normalized["f1_table"] = merged["f1_table"]
            continue
        normalized[key] = merged[key]
    return ParsedConfig(
        mode=mode, sim=sim, record_every=record_every,
        grid_nodes=grid_nodes, grid_extent=grid_extent,
        f1_table=merged.get("f1_table"), normalized=normalized,
    )


def serialize_config(parsed: ParsedConfig) -> str:
    """Canonical JSON text whose parse reproduces ``parsed`` exactly."""
    return json.dumps(parsed.normalized, indent=2) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def _plot_script(bound: float | None, has_h: bool) -> str:
    """Gnuplot text plotting the trajectory CSV written beside it."""
    lines = [
        "# Render with: gnuplot plot.gp  (reads trajectory.csv in this directory)",
        'set datafile separator ","',
        "set key autotitle columnhead",
        "set terminal pngcairo size 960,640",
        'set xlabel "t"',
        "",
        'set output "theta.png"',
        'set ylabel "temperature"',
        'plot "trajectory.csv" using 1:6 with lines lw 2 title "Theta(t)"',
        "",
        'set output "aux_moment.png"',
        'set ylabel "F(t) = 3 Theta + |u-u1|^2 + 3 Theta1/m1"',
    ]
    if bound is not None:
        shift_note = "const bound line excludes the 3 Theta1/m1 shift of column 7"
        lines += [
            f"# {shift_note}",
            f'plot "trajectory.csv" using 1:7 with lines lw 2 title "F(t)", \\',
            f'     {_fmt(bound)} with lines dashtype 2 title "bound + shift"',
        ]
    else:
        lines.append('plot "trajectory.csv" using 1:7 with lines lw 2 title "F(t)"')
    if has_h:
        lines += [
            "",
            'set output "h_functional.png"',
            'set ylabel "H(t)"',
            'plot "trajectory.csv" using 1:14 with lines lw 2 title "H quadratic", \\',
            '     "trajectory.csv" using 1:15 with lines lw 2 title "H entropy"',
        ]
    return "\n".join(lines) + "\n"


def _write_bound_report(
    path: Path,
    parsed: ParsedConfig,
    traj: MomentTrajectory,
    extra_lines: Sequence[str] = (),
) -> bool:
    """Write the bound-compliance report; returns True on a violation."""
    sim = parsed.sim
    assert sim is not None
    lines = [f"mode: {parsed.mode}", f"seed: {sim.seed}",
             f"particles: {sim.n_particles}", f"records: {len(traj.records)}"]
    violated = False
    if sim.bath is None:
        lines.append("bath: none (temperature bound not applicable)")
        t = np.asarray(traj.times())
        th = np.asarray(traj.thetas())
        lines.append(f"theta initial: {_fmt(th[0])}")
        lines.append(f"theta final: {_fmt(th[-1])}")
        try:
            fit = haff_fit(t, th)
            lines.append(f"cooling exponent: {_fmt(fit.exponent)}")
            lines.append(f"cooling timescale t0: {_fmt(fit.t0)}")
            lines.append(f"cooling fit residual: {_fmt(fit.residual)}")
        except FitRefusedError as exc:
            lines.append(f"cooling fit: refused ({exc})")
    else:
        bath = sim.bath
        f0 = traj.records[0].f_aux
        bp = bound_params(sim.restitution, bath, f0)
        lines.append(f"gamma1: {_fmt(bp.gamma1)}")
        lines.append(f"gamma2: {_fmt(bp.gamma2)}")
        lines.append(f"bound max((gamma2/gamma1)^2, F(0)): {_fmt(bp.bound)}")
        shift = 3.0 * bath.theta1 / bath.m1
        worst = -math.inf
        worst_t = 0.0
        for rec in traj.records:
            allowance = 4.0 * f_aux_stderr(rec, bath, sim.n_particles)
            excess = (rec.f_aux - shift) - (bp.bound + allowance)
            if excess > worst:
                worst, worst_t = excess, rec.t
            if excess > 0.0:
                violated = True
        lines.append(f"largest F excess over bound + 4 sigma: {_fmt(worst)} at t = {_fmt(worst_t)}")
        lines.append(f"verdict: {'VIOLATION' if violated else 'OK'}")
    lines.extend(extra_lines)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return violated


def _steady_theta(traj: MomentTrajectory, u1: np.ndarray | None):
    """detect_steady plus the mean/SE of theta over the steady tail.

    Returns ``(None, nan, nan)`` when the trajectory is too short for the
    steady window: a short run is a legitimate configuration, not an error.
    """
    try:
        verdict = detect_steady(traj, u1=u1)
    except ValueError as exc:
        log.warning("steady detection skipped: %s", exc)
        return None, math.nan, math.nan
    if not verdict.steady:
        return verdict, math.nan, math.nan
    tail = np.asarray(traj.thetas()[verdict.index :])
    se = float(tail.std(ddof=1) / math.sqrt(tail.size)) if tail.size > 1 else math.nan
    return verdict, float(tail.mean()), se


def execute(parsed: ParsedConfig, out_dir: str | Path = ".", threads: int = 1) -> int:
    """Run one configured pipeline, writing outputs into ``out_dir``."""
    if parsed.mode == "validate":
        return run_validation(seed=parsed.normalized["seed"])
    sim = parsed.sim
    assert sim is not None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    h_reference: Callable | None = None
    h_extent = None
    h_center = None
    steady_grid = None
    grid = None
    if parsed.mode == "linear" and sim.bath is not None and sim.bath.kind == "maxwellian":
        log.info("building %d^3 kernel grid", parsed.grid_nodes)
        grid = make_grid(
            sim.restitution, sim.bath, n=parsed.grid_nodes,
            extent_sigma=parsed.grid_extent,
        )
        steady_grid = steady_state(grid)
        write_grid_csv(out / "steady_f1.csv", grid, steady_grid.f)
        from scipy.interpolate import RegularGridInterpolator

        shape = (grid.n,) * 3
        interp = RegularGridInterpolator(
            grid.axes, steady_grid.f.reshape(shape),
            method="linear", bounds_error=False, fill_value=0.0,
        )
        h_reference = interp
        h_extent = 0.9 * parsed.grid_extent * sim.bath.sigma_th
        h_center = sim.bath.u1

    observers = ObserverConfig(
        record_every=parsed.record_every,
        compute_lp=True,
        compute_sigma=True,
        h_reference=h_reference,
        h_extent=h_extent,
        h_center=h_center,
        h_bias_correct=True,
    )
    try:
        traj = run(sim, observers=observers, n_workers=threads)
    except TimeStepError as exc:
        print(f"time-step error: {exc}", file=sys.stderr)
        return 1

    traj.to_csv(out / "trajectory.csv")

    extra: list[str] = []
    code = 0
    if parsed.mode == "full":
        verdict, theta_s, theta_se = _steady_theta(traj, sim.bath.u1)
        if verdict is None:
            line = "steady verdict: not enough records for the steady window"
        elif verdict.steady:
            line = (f"steady verdict: steady at t = {_fmt(verdict.t_steady)}, "
                    f"theta = {_fmt(theta_s)} +- {_fmt(theta_se)}")
        else:
            line = "steady verdict: not steady"
        extra.append(line)
        print(line)
    elif parsed.mode == "linear":
        verdict, theta_s, theta_se = _steady_theta(traj, sim.bath.u1)
        if verdict is None:
            extra.append("steady verdict: not enough records for the steady window")
        else:
            extra.append(
                f"steady verdict: {'steady at t = ' + _fmt(verdict.t_steady) if verdict.steady else 'not steady'}"
            )
        if steady_grid is not None:
            extra.append(f"theta grid steady: {_fmt(steady_grid.theta)}")
            extra.append(f"theta simulation steady: {_fmt(theta_s)} +- {_fmt(theta_se)}")
            disc = abs(theta_s - steady_grid.theta)
            extra.append(f"theta discrepancy: {_fmt(disc)}")
            for line in extra:
                print(line)

    bound_value = None
    if sim.bath is not None:
        bp = bound_params(sim.restitution, sim.bath, traj.records[0].f_aux)
        # Plot line includes the 3 Theta1/m1 shift so it is comparable to F.
        bound_value = bp.bound + 3.0 * sim.bath.theta1 / sim.bath.m1
    violated = _write_bound_report(out / "bound_report.txt", parsed, traj, extra)
    (out / "plot.gp").write_text(
        _plot_script(bound_value, has_h=h_reference is not None), encoding="utf-8"
    )
    if violated:
        print("temperature bound violated beyond the 4 sigma allowance", file=sys.stderr)
        code = 2
    return code


# --------------------------------------------------------------------------
# validation suite


def _check_pair_collision_example(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=0.5, e=1.0, m1=1.0)
    v, w = collide_q([1.0, 0, 0], [-1.0, 0, 0], [0.0, 1.0, 0.0], params)
    assert np.allclose(v, [0.25, 0.75, 0.0], atol=1e-14), v
    assert np.allclose(w, [-0.25, -0.75, 0.0], atol=1e-14), w


def _check_bath_collision_examples(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=0.5, m1=1.0)  # alpha=0.5, beta=0.25
    v, w = collide_l_sigma([1.0, 0, 0], [0.0, 0, 0], [-1.0, 0, 0], params)
    assert np.allclose(v, [0.25, 0, 0], atol=1e-14), v
    assert np.allclose(w, [0.75, 0, 0], atol=1e-14), w
    params = RestitutionParams(epsilon=1.0, e=1.0, m1=1.0)  # alpha=0.5, beta=0
    v, w = collide_l_n([2.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0], params)
    assert np.allclose(v, [0.0, 0, 0], atol=1e-14), v
    assert np.allclose(w, [2.0, 0, 0], atol=1e-14), w


def _check_momentum_conservation(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=0.7, e=0.6, m1=1.7)
    v, w = rng.standard_normal((2, 500, 3)) * 3.0
    sigma = v + rng.standard_normal((500, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    v1, w1 = collide_q(v, w, sigma, params)
    drift = np.abs((v1 + w1) - (v + w)).max()
    assert drift <= 1e-12, drift
    v2, w2 = collide_l_sigma(v, w, sigma, params)
    drift = np.abs((v2 + params.m1 * w2) - (v + params.m1 * w)).max()
    assert drift <= 1e-12, drift


def _check_restitution_law(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=0.55, m1=0.8)
    v, w = rng.standard_normal((2, 200, 3))
    n = rng.standard_normal((200, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    v1, w1 = collide_l_n(v, w, n, params)
    pre = np.sum((v - w) * n, axis=1)
    post = np.sum((v1 - w1) * n, axis=1)
    err = np.abs(post + params.e * pre).max()
    assert err <= 1e-12, err


def _check_energy_split(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=0.8, m1=1.5)  # alpha=0.6, beta=0.1
    v, w = rng.standard_normal((2, 2000, 3))
    sigma = rng.standard_normal((2000, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    v1, w1 = collide_l_sigma(v, w, sigma, params)
    ell, residual = energy_split_check(v, w, v1, w1, params)
    assert np.max(residual) <= 1e-12, np.max(residual)
    assert np.all(ell >= params.e - 1e-12) and np.all(ell <= 1.0 + 1e-12)


def _check_sphere_averages(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=0.8, e=0.75, m1=1.3)
    u1 = np.array([0.3, -0.2, 0.5])
    kappa = params.kappa
    for _ in range(10):
        v, w = rng.standard_normal((2, 3)) * 2.0
        q = v - w
        got = sphere_average_q(lambda x: np.sum(x**2, axis=-1), v, w, params, order=32)
        want = -(1.0 - params.epsilon**2) / 4.0 * float(q @ q)
        assert abs(got - want) <= 1e-6 * max(1.0, abs(want)), (got, want)
        got = sphere_average_l(
            lambda x: np.sum((x - u1) ** 2, axis=-1), v, w, params, order=32
        )
        want = -2.0 * kappa * (1.0 - kappa) * float(q @ q) - 2.0 * kappa * float(
            q @ (w - u1)
        )
        assert abs(got - want) <= 1e-6 * max(1.0, abs(want)), (got, want)


def _check_collision_frequency(rng: np.random.Generator) -> None:
    bath = BathParams(m1=1.3, u1=np.array([0.1, 0.0, -0.4]), theta1=0.9, lambda_=1.7)
    v_far = bath.u1 + np.array([1e7, 0.0, 0.0])
    ratio = nu(bath, v_far) * bath.lambda_ / 1e7
    assert abs(ratio - 1.0) <= 1e-6, ratio
    # continuity across the small-speed series switch
    s = bath.sigma_th
    lo = nu(bath, bath.u1 + np.array([0.99e-4 * s, 0, 0]))
    hi = nu(bath, bath.u1 + np.array([1.01e-4 * s, 0, 0]))
    assert abs(lo - hi) <= 1e-10 * lo, (lo, hi)
    mean_speed = abs_moment(bath, 1.0)
    for _ in range(50):
        v = rng.standard_normal(3) * 3.0
        dist = float(np.linalg.norm(v - bath.u1))
        val = nu(bath, v)
        assert val >= abs(dist - mean_speed) / bath.lambda_ - 1e-12
        assert val <= (dist + mean_speed) / bath.lambda_ + 1e-12


def _check_abs_moments(rng: np.random.Generator) -> None:
    bath = BathParams(m1=2.0, u1=np.zeros(3), theta1=1.4, lambda_=1.0)
    assert abs(abs_moment(bath, 0.0) - 1.0) <= 1e-12
    want = 3.0 * bath.theta1 / bath.m1
    assert abs(abs_moment(bath, 2.0) - want) <= 1e-12 * want


def _check_kernel_oracle(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=0.8, m1=1.0)
    bath = BathParams(m1=1.0, u1=np.zeros(3), theta1=1.0, lambda_=1.0)
    for _ in range(5):
        v, w = rng.standard_normal((2, 3))
        closed = float(kernel_closed_form(v, w, params, bath))
        quad = kernel_quadrature(v, w, params, bath)
        assert abs(closed - quad) <= 1e-6 * max(abs(closed), 1e-300), (closed, quad)


def _check_grid_mass_conservation(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=0.8, m1=1.0)
    bath = BathParams(m1=1.0, u1=np.zeros(3), theta1=1.0, lambda_=1.0)
    grid = make_grid(params, bath, n=8, extent_sigma=5.0)
    f = rng.random(grid.n_nodes)
    rate = float(grid.apply_l(f).sum()) * grid.cell_volume
    scale = float((grid.nu_vec * f).sum()) * grid.cell_volume
    assert abs(rate) <= 1e-12 * scale, rate


def _check_elastic_fixed_point(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=1.0, e=1.0, m1=1.0)
    bath = BathParams(m1=1.0, u1=np.zeros(3), theta1=1.0, lambda_=1.0)
    grid = make_grid(params, bath, n=10, extent_sigma=5.0)
    m = grid.maxwellian()
    res = grid.apply_l(m)
    scale = float(np.max(grid.nu_vec * m))
    assert np.max(np.abs(res)) <= 1e-10 * scale, np.max(np.abs(res))


def _check_checkpoint_roundtrip(rng: np.random.Generator) -> None:
    import tempfile

    ens = Ensemble(velocities=rng.standard_normal((64, 3)), t=1.25, seed=99)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "state.ckpt"
        save_checkpoint(path, ens, rng)
        restored, rng2 = load_checkpoint(path)
        assert restored.velocities.tobytes() == ens.velocities.tobytes()
        assert restored.t == ens.t and restored.seed == ens.seed
        assert rng2.random() == rng.random()


def _check_run_reproducibility(rng: np.random.Generator) -> None:
    params = RestitutionParams(epsilon=0.8, e=0.8, m1=1.0)
    bath = BathParams(m1=1.0, u1=np.zeros(3), theta1=1.0, lambda_=1.0)
    config = SimConfig(
        tau=1.0, restitution=params, bath=bath, dt=0.01, t_end=0.3,
        n_particles=500, seed=777,
    )
    one = run(config)
    two = run(config)
    assert one.final.velocities.tobytes() == two.final.velocities.tobytes()
    assert one.times().tobytes() == two.times().tobytes()
    assert one.thetas().tobytes() == two.thetas().tobytes()


_VALIDATION_CHECKS: list[tuple[str, Callable[[np.random.Generator], None]]] = [
    ("pair collision worked example", _check_pair_collision_example),
    ("bath collision worked examples", _check_bath_collision_examples),
    ("momentum conservation in collision maps", _check_momentum_conservation),
    ("restitution law along impact direction", _check_restitution_law),
    ("energy split factor within [e, 1]", _check_energy_split),
    ("sphere-average identities", _check_sphere_averages),
    ("collision frequency closed form", _check_collision_frequency),
    ("bath absolute moments", _check_abs_moments),
    ("scattering kernel vs planar quadrature", _check_kernel_oracle),
    ("grid operator conserves mass", _check_grid_mass_conservation),
    ("elastic grid fixed point", _check_elastic_fixed_point),
    ("checkpoint round-trip", _check_checkpoint_roundtrip),
    ("run reproducibility", _check_run_reproducibility),
]


def run_validation(seed: int = 12345, stream=None) -> int:
    """Run the invariant suite, printing one PASS/FAIL line per check."""
    stream = stream if stream is not None else sys.stdout
    failures = 0
    for name, fn in _VALIDATION_CHECKS:
        try:
            fn(np.random.default_rng(seed))
        except Exception as exc:  # noqa: BLE001 - any failure is a FAIL line
            failures += 1
            print(f"FAIL {name}: {exc!r}", file=stream)
        else:
            print(f"PASS {name}", file=stream)
    total = len(_VALIDATION_CHECKS)
    print(f"{total - failures}/{total} checks passed", file=stream)
    return 0 if failures == 0 else 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="granular-bath",
        description="Particle and velocity-grid solver for a granular gas "
        "coupled to a thermal bath.",
    )
    parser.add_argument("mode", choices=MODES, help="run mode")
    parser.add_argument("--config", default=None, metavar="PATH",
                        help="JSON configuration file (optional for the "
                        "parameter-free validate mode)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker streams for the collision sweeps")
    parser.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (created if missing)")
    args = parser.parse_args(argv)
    level = os.environ.get("GB_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 1
    if args.config is None and args.mode != "validate":
        print(f"--config is required for {args.mode} mode", file=sys.stderr)
        return 1
    try:
        if args.config is None:
            parsed = parse_config_dict({"mode": "validate"},
                                       expect_mode=args.mode,
                                       seed_override=args.seed)
        else:
            parsed = parse_config(args.config, expect_mode=args.mode,
                                  seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        return execute(parsed, out_dir=args.out, threads=args.threads)
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
