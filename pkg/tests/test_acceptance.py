"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance is pinned here, not configured elsewhere.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from steadymag.dynamics import (
    SpinState,
    build_liouvillian,
    integrate_trajectory,
    linear_response,
    p0_of_state,
    required_time_step,
    steady_state_analytic,
    steady_state_numeric,
)
from steadymag.experiments import (
    bandwidth_sweep,
    ensemble_slope,
    estimate_dynamic_range,
    estimate_sensitivity,
    make_setup,
    response_curve,
    scaling_campaign,
)
from steadymag.lockin import LockinConfig, demodulate, scope, settled_amplitude
from steadymag.model import (
    DriveField,
    PhysicalConstants,
    SensorParams,
    derive_rates,
    microwave_frequency_for_detuning,
    optimal_detuning,
)
from steadymag.photophysics import NoiseModel, TimeTrace
from steadymag.seeding import rng_for

from conftest import params_for

CONSTANTS = PhysicalConstants()


def _report(criterion: str, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    status = "PASS" if ok and elapsed < limit else "FAIL"
    print(f"{criterion}: {status} ({detail}; {elapsed:.1f} s < {limit:.0f} s)")
    assert ok, f"{criterion}: {detail}"
    assert elapsed < limit, f"{criterion}: runtime {elapsed:.1f} s exceeds {limit:.0f} s"


def _draw_params(rng):
    """Random operating point: s in [0, 1e3], detuning*T2 in [-10, 10]."""
    gamma1 = 10.0 ** rng.uniform(4.5, 6.5)
    gamma2 = 10.0 ** rng.uniform(4.5, 7.0)
    t1, t2 = 1.0 / gamma1, 1.0 / (gamma2 + 0.5 * gamma1)
    s = 0.0 if rng.uniform() < 0.1 else 10.0 ** rng.uniform(-3.0, 3.0)
    b1 = math.sqrt(s / (t1 * t2)) / abs(CONSTANTS.gyromagnetic_ratio)
    detuning = rng.uniform(-10.0, 10.0) / t2
    params = SensorParams(
        static_field=0.0,
        drive_amplitude=b1,
        microwave_frequency=microwave_frequency_for_detuning(detuning, 0.0, 0, CONSTANTS),
        gamma1=gamma1,
        gamma2=gamma2,
    )
    return params, derive_rates(params, CONSTANTS)


def test_a1_steady_state_oracle_equivalence() -> None:
    start = time.monotonic()
    rng = rng_for(101)
    worst = 0.0
    n_draws = 1000
    for _ in range(n_draws):
        params, rates = _draw_params(rng)
        b = rng.uniform(-0.5, 0.5) / (CONSTANTS.gyromagnetic_ratio * rates.t2)
        analytic = steady_state_analytic(params, rates, CONSTANTS, b)
        numeric = steady_state_numeric(build_liouvillian(params, rates, CONSTANTS, b))
        worst = max(worst, float(np.max(np.abs(analytic.matrix - numeric.matrix))))
    elapsed = time.monotonic() - start
    _report(
        "A1 steady-state oracle equivalence",
        worst < 1e-10,
        f"max element-wise deviation {worst:.2e} < 1e-10 over {n_draws} draws",
        elapsed,
        10.0,
    )


def test_a2_first_order_validity() -> None:
    start = time.monotonic()
    rng = rng_for(102)
    lo, hi = math.inf, 0.0
    for _ in range(100):
        while True:
            params, rates = _draw_params(rng)
            if rates.saturation > 0.0:  # zero drive has an identically zero kernel
                break
        resp = linear_response(params, rates, CONSTANTS)
        b = 0.05 / abs(CONSTANTS.gyromagnetic_ratio * rates.t2)

        def residual(bb):
            full = steady_state_analytic(params, rates, CONSTANTS, bb).matrix
            return np.linalg.norm(full - resp.rho0.matrix - resp.kernel * bb)

        ratio = residual(b) / residual(b / 2.0)
        lo, hi = min(lo, ratio), max(hi, ratio)
    elapsed = time.monotonic() - start
    _report(
        "A2 first-order residual quadratic in b",
        3.8 <= lo and hi <= 4.2,
        f"halving ratios in [{lo:.3f}, {hi:.3f}], want 4.0 +- 0.2 (100 draws)",
        elapsed,
        5.0,
    )


def test_a3_optimal_detuning_argmax() -> None:
    from scipy.optimize import minimize_scalar

    start = time.monotonic()
    worst = 0.0
    for s in (0.1, 1.0, 10.0, 100.0):
        params = params_for(CONSTANTS, saturation=s)
        rates = derive_rates(params, CONSTANTS)
        closed = optimal_detuning(rates)
        h = 1e-4 / abs(CONSTANTS.gyromagnetic_ratio * rates.t2)

        def neg_slope(delta):
            p = params_for(CONSTANTS, saturation=s, detuning=delta)
            r = derive_rates(p, CONSTANTS)
            plus = p0_of_state(steady_state_analytic(p, r, CONSTANTS, h))
            minus = p0_of_state(steady_state_analytic(p, r, CONSTANTS, -h))
            return -abs(plus - minus) / (2.0 * h)

        res = minimize_scalar(
            neg_slope,
            bounds=(0.2 * closed, 3.0 * closed),
            method="bounded",
            options={"xatol": closed * 1e-7},
        )
        worst = max(worst, abs(res.x - closed) / closed)
    elapsed = time.monotonic() - start
    _report(
        "A3 optimal detuning matches numeric argmax",
        worst < 1e-4,
        f"max relative deviation {worst:.2e} < 1e-4 for s in (0.1, 1, 10, 100)",
        elapsed,
        5.0,
    )


def test_a4_integrator_convergence_and_physicality() -> None:
    start = time.monotonic()
    params = params_for(CONSTANTS, saturation=4.0)
    rates = derive_rates(params, CONSTANTS)
    b = 2e-7
    drive = DriveField(amplitude=b, angular_frequency=0.0)
    dt = required_time_step(params, rates, CONSTANTS, drive)
    horizon = 10.0 * max(rates.t1, rates.t2)
    times = np.arange(int(math.ceil(horizon / dt)) + 1) * dt
    target = steady_state_analytic(params, rates, CONSTANTS, b)
    rng = rng_for(104)
    worst_dist = 0.0
    worst_trace = 0.0
    worst_norm = 0.0
    for i in range(20):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        radius = 1.0 if i < 5 else rng.uniform(0.0, 1.0)
        traj = integrate_trajectory(
            params, rates, CONSTANTS, drive, times,
            SpinState.from_bloch(*(radius * direction)), store_bloch=True,
        )
        worst_dist = max(
            worst_dist, float(np.linalg.norm(traj.final_state.matrix - target.matrix))
        )
        for idx in np.linspace(0, times.size - 1, 25).astype(int):
            reconstructed = SpinState.from_bloch(*traj.bloch[idx]).matrix
            worst_trace = max(worst_trace, abs(reconstructed.trace().real - 1.0))
        worst_norm = max(worst_norm, traj.max_bloch_norm)
    min_eig = (1.0 - worst_norm) / 2.0
    elapsed = time.monotonic() - start
    _report(
        "A4 integrator convergence & physicality",
        worst_dist < 1e-8 and worst_trace < 1e-9 and min_eig >= -1e-9,
        f"max distance {worst_dist:.2e} < 1e-8 after 10 max(T1,T2), trace drift "
        f"{worst_trace:.1e} < 1e-9, min eigenvalue {min_eig:.2e} >= -1e-9 (20 states)",
        elapsed,
        30.0,
    )


def _sensing_setup():
    return make_setup(gamma1=1e6, gamma2=4.5e6, saturation=2.0)


CHAIN_NOISE = NoiseModel(
    v1_noise_density=2e-5,
    v2_noise_density=1e-6,
    drift_amplitude=0.01,
    drift_corner_hz=0.2,
    seed=2026,
)


@pytest.fixture(scope="module")
def noisy_campaign():
    return scaling_campaign(
        _sensing_setup(),
        signal_frequency=9.0,
        signal_amplitude=1e-6,
        sample_rate=100.0,
        noise=CHAIN_NOISE,
        resolution_durations=(10.0, 30.0, 100.0, 300.0, 1000.0),
        precision_durations=(10.0, 20.0, 50.0, 100.0, 300.0),
        n_seeds=50,
    )


def test_a5_resolution_scaling(noisy_campaign) -> None:
    start = time.monotonic()
    quiet = scaling_campaign(
        _sensing_setup(),
        signal_frequency=9.0,
        signal_amplitude=1e-6,
        sample_rate=100.0,
        noise=NoiseModel(),
        resolution_durations=(10.0, 30.0, 100.0, 300.0, 1000.0),
        precision_durations=(10.0, 20.0, 50.0),
        n_seeds=2,
    )
    products_ok = all(
        abs(p - 1.207) <= 0.01 for p in quiet.fwhm_time_products
    )
    slope = noisy_campaign.resolution_slope
    elapsed = time.monotonic() - start
    _report(
        "A5 resolution scaling (FWHM ~ 1/T)",
        products_ok and abs(slope + 1.0) <= 0.05,
        f"full-chain slope {slope:.3f} within -1.00 +- 0.05; noiseless FWHM*T in "
        f"[{min(quiet.fwhm_time_products):.4f}, {max(quiet.fwhm_time_products):.4f}], "
        "want 1.207 +- 0.01",
        elapsed,
        120.0,
    )


def test_a6_precision_scaling(noisy_campaign) -> None:
    start = time.monotonic()
    slope = noisy_campaign.precision_slope
    recovered = all(noisy_campaign.recovered)
    elapsed = time.monotonic() - start
    _report(
        "A6 precision scaling (sigma_f ~ T^-1.5)",
        slope is not None and abs(slope + 1.5) <= 0.15 and recovered,
        f"full-chain Monte Carlo slope {slope:.3f} within -1.5 +- 0.15 "
        f"(50 seeds per T); 9 Hz recovered at every T: {recovered}",
        elapsed,
        600.0,
    )


def test_a7_bandwidth_behavior() -> None:
    start = time.monotonic()
    kappa = 5e5
    gamma1_targets = (1e5, 3e5, 1e6, 3e6)
    results = bandwidth_sweep(
        [g / kappa for g in gamma1_targets],
        kappa,
        gamma2=4.5e6,
        saturation=2.0,
        frequencies=np.geomspace(3e3, 1e7, 13),
        field_amplitude=1e-6,
    )
    monotone = all(np.all(np.diff(r.normalized_amplitude) < 1e-6) for r in results)
    crossings_unique = all(
        int(np.count_nonzero(np.diff(np.signbit(r.normalized_amplitude - 2**-0.5))))
        == 1
        for r in results
    )
    bandwidths = [r.bandwidth for r in results]
    increasing = all(b2 > b1 for b1, b2 in zip(bandwidths, bandwidths[1:]))
    growth = bandwidths[-1] / bandwidths[0]
    elapsed = time.monotonic() - start
    _report(
        "A7 bandwidth vs pumping rate",
        monotone and crossings_unique and increasing and growth >= 3.0,
        f"curves monotone: {monotone}, unique 1/sqrt(2) crossings: {crossings_unique}, "
        f"bandwidths {['%.3g' % b for b in bandwidths]} Hz strictly increasing with "
        f"{growth:.1f}x growth >= 3x over 30x gamma1",
        elapsed,
        300.0,
    )


def _triplet_setup():
    return make_setup(
        gamma1=1e6,
        gamma2=5e5,
        saturation=2.0,
        detuning=1.5 * abs(CONSTANTS.hyperfine_coupling),
    )


def test_a8_three_peaks_and_dynamic_range() -> None:
    start = time.monotonic()
    setup = _triplet_setup()
    curve = response_curve(setup, 2000.0, np.geomspace(1e-6, 5e-4, 400))
    v = curve.v1_amplitude
    interior = np.nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))[0] + 1
    peaks = curve.field_amplitudes[interior]
    spacing_target = 2.16e6 / 28e9  # |A / gamma_e| in Tesla
    spacings = np.diff(peaks)
    spacing_ok = peaks.size == 3 and np.all(
        np.abs(spacings - spacing_target) <= 0.10 * spacing_target
    )
    # noise calibrated so the minimum detectable field is 1 nT
    k = abs(ensemble_slope(setup))
    noise = NoiseModel(v1_noise_density=k * 1e-9, seed=88)
    result = estimate_dynamic_range(setup, 2000.0, noise)
    elapsed = time.monotonic() - start
    _report(
        "A8 hyperfine three-peak response & dynamic range",
        spacing_ok and result.dynamic_range_db >= 80.0,
        f"{peaks.size} peaks at {['%.1f uT' % (p * 1e6) for p in peaks]}, spacings "
        f"{['%.1f uT' % (s * 1e6) for s in spacings]} within 77.1 uT +- 10%; "
        f"dynamic range {result.dynamic_range_db:.1f} dB >= 80 dB at b_min "
        f"{result.b_min:.2e} T",
        elapsed,
        120.0,
    )


def test_a9_sensitivity_closed_loop() -> None:
    start = time.monotonic()
    setup = _triplet_setup()
    k = abs(ensemble_slope(setup))
    noise_1x = NoiseModel(v1_noise_density=k * 1e-9, seed=77)
    noise_10x = NoiseModel(v1_noise_density=10.0 * k * 1e-9, seed=77)
    single = estimate_sensitivity(setup, 2000.0, noise_1x, seed_index=0)
    closed_loop_ok = abs(single.sensitivity - 1e-9) <= 0.2e-9

    base = np.array(
        [
            estimate_sensitivity(setup, 2000.0, noise_1x, seed_index=i).sensitivity
            for i in range(8)
        ]
    )
    tenfold = np.array(
        [
            estimate_sensitivity(setup, 2000.0, noise_10x, seed_index=i).sensitivity
            for i in range(8)
        ]
    )
    ratio = tenfold.mean() / base.mean()
    sigma_ratio = ratio * math.sqrt(
        (base.std(ddof=1) / base.mean()) ** 2 / base.size
        + (tenfold.std(ddof=1) / tenfold.mean()) ** 2 / tenfold.size
    )
    linear_ok = abs(ratio - 10.0) <= 3.0 * sigma_ratio + 1e-6
    elapsed = time.monotonic() - start
    _report(
        "A9 sensitivity closed loop",
        closed_loop_ok and linear_ok,
        f"injected 1 nT/sqrt(Hz) equivalent, estimated "
        f"{single.sensitivity * 1e9:.3f} nT/sqrt(Hz) (want 1.0 +- 0.2); 10x noise "
        f"gives ratio {ratio:.3f} = 10 within 3 sigma ({3 * sigma_ratio:.3f})",
        elapsed,
        120.0,
    )


def test_a10_lockin_correctness() -> None:
    start = time.monotonic()
    fs, f_ref, amp, phase, tau = 20000.0, 100.0, 0.25, math.pi / 4.0, 0.05
    n = int(60 * tau * fs)
    t = np.arange(n) / fs
    trace = TimeTrace(fs, 0.0, amp * np.cos(2 * math.pi * f_ref * t + phase))
    cfg = LockinConfig(reference_frequency=f_ref, time_constant=tau)
    out = demodulate(trace, cfg)
    tail = slice(-n // 3, None)
    amp_err = abs(out.r[tail].mean() - amp) / amp
    phase_err = abs(out.theta[tail].mean() - phase)
    settled = settled_amplitude(trace, cfg)

    off = TimeTrace(fs, 0.0, amp * np.cos(2 * math.pi * (f_ref + 60.0) * t))
    r_leak = demodulate(off, cfg).r[tail].mean()

    ident = scope(trace, LockinConfig(0.0, 0.0))
    ok = (
        amp_err < 1e-3
        and phase_err < 1e-3
        and abs(settled.value - amp) / amp < 1e-3
        and r_leak < 0.02 * amp
        and ident is trace
    )
    elapsed = time.monotonic() - start
    _report(
        "A10 lock-in correctness",
        ok,
        f"amplitude error {amp_err:.1e} < 1e-3, phase error {phase_err:.1e} rad < 1e-3, "
        f"off-frequency leakage {r_leak / amp:.1e} of amplitude, scope exact identity",
        elapsed,
        10.0,
    )


def test_a11_determinism_from_echo(tmp_path) -> None:
    from steadymag import cli

    start = time.monotonic()
    identical = True
    details = []
    for subcommand, extra in (
        ("trace", ["--set", "trace.duration_s=10.0"]),
        ("spectrum", ["--set", "trace.duration_s=20.0"]),
        ("sensitivity", []),
    ):
        out1 = tmp_path / f"{subcommand}_first"
        out2 = tmp_path / f"{subcommand}_second"
        assert cli.main([subcommand, "--out", str(out1), "--seed", "31415"] + extra) == 0
        echo = out1 / subcommand / "config_echo.toml"
        assert cli.main([subcommand, "--out", str(out2), "--config", str(echo)]) == 0
        for artifact in sorted((out1 / subcommand).iterdir()):
            twin = out2 / subcommand / artifact.name
            same = artifact.read_bytes() == twin.read_bytes()
            identical = identical and same
            if artifact.suffix == ".csv":
                details.append(f"{subcommand}/{artifact.name}: {'==' if same else '!='}")
    elapsed = time.monotonic() - start
    _report(
        "A11 determinism (re-run from config echo)",
        identical,
        "byte-identical artifacts: " + ", ".join(details),
        elapsed,
        120.0,
    )
