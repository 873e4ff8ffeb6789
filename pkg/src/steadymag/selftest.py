"""Quick oracle cross-checks, runnable from the CLI.

Each check compares an implementation path against an independent route
(closed form vs linear solve, finite differences vs analytic optimum,
propagation vs fixed point, demodulation vs known sinusoid) and returns a
pass/fail with a measured figure. The pytest acceptance suite runs the
same comparisons at full size; this is the fast subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    build_liouvillian,
    integrate_trajectory,
    linear_response,
    p0_slope,
    required_time_step,
    steady_state_analytic,
    steady_state_numeric,
)
from .lockin import LockinConfig, demodulate, scope, settled_amplitude
from .model import (
    DriveField,
    PhysicalConstants,
    SensorParams,
    derive_rates,
    microwave_frequency_for_detuning,
)
from .photophysics import TimeTrace
from .spectro import power_spectrum
from .seeding import rng_for


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _params_from_draw(rng: np.random.Generator, constants: PhysicalConstants):
    gamma1 = 10.0 ** rng.uniform(4.5, 6.5)
    gamma2 = 10.0 ** rng.uniform(4.5, 7.0)
    t1 = 1.0 / gamma1
    t2 = 1.0 / (gamma2 + 0.5 * gamma1)
    s = 10.0 ** rng.uniform(-3.0, 3.0)
    b1 = math.sqrt(s / (t1 * t2)) / abs(constants.gyromagnetic_ratio)
    detuning = rng.uniform(-10.0, 10.0) / t2
    params = SensorParams(
        static_field=0.0,
        drive_amplitude=b1,
        microwave_frequency=microwave_frequency_for_detuning(detuning, 0.0, 0, constants),
        gamma1=gamma1,
        gamma2=gamma2,
    )
    return params, derive_rates(params, constants)


def check_steady_state_equivalence(n_draws: int = 200, seed: int = 7) -> CheckResult:
    constants = PhysicalConstants()
    rng = rng_for(seed, 0)
    worst = 0.0
    for _ in range(n_draws):
        params, rates = _params_from_draw(rng, constants)
        b = rng.uniform(-0.5, 0.5) / (constants.gyromagnetic_ratio * rates.t2)
        analytic = steady_state_analytic(params, rates, constants, b)
        numeric = steady_state_numeric(build_liouvillian(params, rates, constants, b))
        worst = max(worst, float(np.max(np.abs(analytic.matrix - numeric.matrix))))
    return CheckResult(
        "steady-state closed form vs linear solve",
        worst < 1e-10,
        f"max element deviation {worst:.2e} over {n_draws} draws (tol 1e-10)",
    )


def check_linear_response_order(n_draws: int = 30, seed: int = 11) -> CheckResult:
    constants = PhysicalConstants()
    rng = rng_for(seed, 1)
    lo, hi = math.inf, 0.0
    for _ in range(n_draws):
        params, rates = _params_from_draw(rng, constants)
        resp = linear_response(params, rates, constants)
        b = 0.05 / abs(constants.gyromagnetic_ratio * rates.t2)

        def residual(bb):
            full = steady_state_analytic(params, rates, constants, bb).matrix
            return np.linalg.norm(full - resp.rho0.matrix - resp.kernel * bb)

        ratio = residual(b) / residual(b / 2.0)
        lo, hi = min(lo, ratio), max(hi, ratio)
    ok = 3.8 <= lo and hi <= 4.2
    return CheckResult(
        "first-order residual is quadratic in b",
        ok,
        f"halving ratio in [{lo:.3f}, {hi:.3f}] over {n_draws} draws (want 4.0 +- 0.2)",
    )


def check_optimal_detuning() -> CheckResult:
    from scipy.optimize import minimize_scalar

    constants = PhysicalConstants()
    worst = 0.0
    for s in (1.0, 10.0):
        gamma1, gamma2 = 1e6, 4.5e6
        t1 = 1.0 / gamma1
        t2 = 1.0 / (gamma2 + 0.5 * gamma1)
        b1 = math.sqrt(s / (t1 * t2)) / abs(constants.gyromagnetic_ratio)
        h = 1e-4 / abs(constants.gyromagnetic_ratio * t2)

        def neg_slope(delta):
            params = SensorParams(
                static_field=0.0,
                drive_amplitude=b1,
                microwave_frequency=microwave_frequency_for_detuning(
                    delta, 0.0, 0, constants
                ),
                gamma1=gamma1,
                gamma2=gamma2,
            )
            rates = derive_rates(params, constants)
            p_plus = steady_state_analytic(params, rates, constants, h).matrix[1, 1].real
            p_minus = steady_state_analytic(params, rates, constants, -h).matrix[1, 1].real
            return -abs(p_plus - p_minus) / (2.0 * h)

        closed = math.sqrt(1.0 + s) / (math.sqrt(3.0) * t2)
        res = minimize_scalar(
            neg_slope,
            bounds=(0.2 * closed, 3.0 * closed),
            method="bounded",
            options={"xatol": closed * 1e-7},
        )
        worst = max(worst, abs(res.x - closed) / closed)
    return CheckResult(
        "optimal detuning matches numeric argmax",
        worst < 1e-4,
        f"max relative deviation {worst:.2e} (tol 1e-4)",
    )


def check_integrator_fixed_point(seed: int = 17) -> CheckResult:
    constants = PhysicalConstants()
    gamma1, gamma2, s = 1e6, 4.5e6, 4.0
    t1 = 1.0 / gamma1
    t2 = 1.0 / (gamma2 + 0.5 * gamma1)
    b1 = math.sqrt(s / (t1 * t2)) / abs(constants.gyromagnetic_ratio)
    params = SensorParams(
        static_field=0.0,
        drive_amplitude=b1,
        microwave_frequency=microwave_frequency_for_detuning(
            math.sqrt(1 + s) / (math.sqrt(3) * t2), 0.0, 0, constants
        ),
        gamma1=gamma1,
        gamma2=gamma2,
    )
    rates = derive_rates(params, constants)
    b = 2e-7
    drive = DriveField(amplitude=b, angular_frequency=0.0)
    dt = required_time_step(params, rates, constants, drive)
    horizon = 10.0 * max(rates.t1, rates.t2)
    times = np.arange(0.0, horizon + dt, dt)
    target = steady_state_analytic(params, rates, constants, b)
    rng = rng_for(seed, 2)
    worst = 0.0
    from .dynamics import SpinState

    for _ in range(3):
        v = rng.normal(size=3)
        v *= rng.uniform(0.0, 1.0) / np.linalg.norm(v)
        traj = integrate_trajectory(
            params, rates, constants, drive, times, SpinState.from_bloch(*v)
        )
        worst = max(
            worst, float(np.linalg.norm(traj.final_state.matrix - target.matrix))
        )
    return CheckResult(
        "propagation converges to the steady state",
        worst < 1e-8,
        f"max final distance {worst:.2e} after 10 max(T1,T2) (tol 1e-8)",
    )


def check_lockin() -> CheckResult:
    fs, f_ref, amp, phase = 20000.0, 100.0, 0.25, math.pi / 4
    tau = 0.05
    n = int(60 * tau * fs)
    t = np.arange(n) / fs
    trace = TimeTrace(fs, 0.0, amp * np.cos(2 * math.pi * f_ref * t + phase))
    cfg = LockinConfig(reference_frequency=f_ref, time_constant=tau)
    out = demodulate(trace, cfg)
    tail = slice(-n // 3, None)
    amp_err = abs(np.hypot(out.x, out.y)[tail].mean() - amp) / amp
    phase_err = abs(np.arctan2(out.y, out.x)[tail].mean() - phase)
    sa = settled_amplitude(trace, cfg)
    ident = scope(trace, LockinConfig(0.0, 0.0))
    ok = (
        amp_err < 1e-3
        and phase_err < 1e-3
        and abs(sa.value - amp) / amp < 1e-3
        and ident.v1 is trace.v1
    )
    return CheckResult(
        "lock-in amplitude/phase recovery and scope identity",
        ok,
        f"amplitude error {amp_err:.2e}, phase error {phase_err:.2e} rad",
    )


def check_spectrum() -> CheckResult:
    fs, f0, amp = 1000.0, 125.0, 0.8
    n = 4096
    t = np.arange(n) / fs
    trace = TimeTrace(fs, 0.0, amp * np.cos(2 * math.pi * f0 * t))
    spec = power_spectrum(trace)
    k = int(round(f0 * n / fs))
    on_bin = abs(spec.magnitude[k] - amp) / amp
    parseval = abs(spec.windowed_power() - np.mean(trace.v1**2)) / np.mean(trace.v1**2)
    ok = on_bin < 1e-10 and parseval < 1e-9
    return CheckResult(
        "spectrum normalization and power consistency",
        ok,
        f"on-bin amplitude error {on_bin:.2e}, power mismatch {parseval:.2e}",
    )


def check_slope_consistency(seed: int = 29) -> CheckResult:
    constants = PhysicalConstants()
    rng = rng_for(seed, 3)
    worst = 0.0
    for _ in range(20):
        params, rates = _params_from_draw(rng, constants)
        analytic = p0_slope(rates, constants)
        h = 1e-4 / abs(constants.gyromagnetic_ratio * rates.t2)
        p_plus = steady_state_analytic(params, rates, constants, h).matrix[1, 1].real
        p_minus = steady_state_analytic(params, rates, constants, -h).matrix[1, 1].real
        fd = (p_plus - p_minus) / (2.0 * h)
        scale = max(abs(analytic), abs(constants.gyromagnetic_ratio) * rates.t2 * 1e-6)
        worst = max(worst, abs(fd - analytic) / scale)
    return CheckResult(
        "P0 slope matches finite differences",
        worst < 1e-5,
        f"max relative deviation {worst:.2e} over 20 draws",
    )


ALL_CHECKS = (
    check_steady_state_equivalence,
    check_linear_response_order,
    check_optimal_detuning,
    check_slope_consistency,
    check_integrator_fixed_point,
    check_lockin,
    check_spectrum,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
