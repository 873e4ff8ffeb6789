"""Command-line entry point.

Subcommands: steady, trace, spectrum, scaling, bandwidth, sensitivity,
dynrange, selftest. Every run resolves its configuration (defaults <-
--config file <- --set overrides), writes a config-echo TOML sufficient to
reproduce the outputs bit for bit, and emits CSV plus TOML summaries into
the output directory. Exit codes: 0 success, 1 invalid configuration,
2 runtime/fit failure.

Config sections and keys are defined in steadymag.config; units in key
names (hz, t, s, w, v) are the user-facing units.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from .dynamics import (
    build_liouvillian,
    ensemble_p0,
    p0_of_state,
    steady_state_analytic,
    steady_state_numeric,
)
from .errors import RunFailure, ValidationError
from .experiments import (
    bandwidth_sweep,
    chain_trace,
    estimate_dynamic_range,
    estimate_sensitivity,
    response_curve,
    scaling_campaign,
)
from .lockin import demodulate
from .spectro import fit_peak, power_spectrum
from . import selftest as selftest_mod

SUBCOMMANDS = (
    "steady",
    "trace",
    "spectrum",
    "scaling",
    "bandwidth",
    "sensitivity",
    "dynrange",
    "selftest",
)


def _write_text(path: str, text: str) -> None:
    """Atomic write: a failed run leaves only a .part file behind."""
    part = path + ".part"
    with open(part, "w") as fh:
        fh.write(text)
    os.replace(part, path)


def _csv(rows, header: str) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _python_scalar(value):
    if isinstance(value, list):
        return [_python_scalar(v) for v in value]
    return value.item() if isinstance(value, np.generic) else value


def _toml_section(name: str, items: dict) -> str:
    lines = [f"[{name}]"]
    for key, value in items.items():
        lines.append(f"{key} = {cfgmod._toml_value(_python_scalar(value))}")
    return "\n".join(lines) + "\n"


def _emit_echo(cfg: dict, out_dir: str) -> str:
    text = cfgmod.emit_toml(cfg)
    _write_text(os.path.join(out_dir, "config_echo.toml"), text)
    return cfgmod.config_hash(cfg)


def cmd_steady(cfg: dict, out_dir: str) -> None:
    setup = cfgmod.build_setup(cfg)
    rates = setup.rates()
    b = cfg["drive"]["amplitude_t"]
    analytic = steady_state_analytic(setup.params, rates, setup.constants, b)
    numeric = steady_state_numeric(
        build_liouvillian(setup.params, rates, setup.constants, b)
    )
    p0 = p0_of_state(analytic)
    p0_ens = float(ensemble_p0(setup.ensemble(), setup.constants, b))
    deviation = float(np.max(np.abs(analytic.matrix - numeric.matrix)))
    print(f"steady state at b = {b!r} T")
    print(f"  rho (closed form) = {analytic.matrix.tolist()}")
    print(f"  max |closed form - linear solve| = {deviation:.3e}")
    print(f"  P0 = {p0!r}")
    print(f"  ensemble P0 = {p0_ens!r}")
    _write_text(
        os.path.join(out_dir, "steady.toml"),
        _toml_section(
            "steady",
            {
                "field_t": float(b),
                "p0": p0,
                "p0_ensemble": p0_ens,
                "t1_s": rates.t1,
                "t2_s": rates.t2,
                "saturation": rates.saturation,
                "detuning_hz": rates.detuning / cfgmod.TWO_PI,
                "solver_deviation": deviation,
            },
        ),
    )


def _make_chain_trace(cfg: dict):
    setup = cfgmod.build_setup(cfg)
    drive = cfgmod.build_drive(cfg)
    noise = cfgmod.build_noise(cfg)
    return setup, chain_trace(
        setup,
        drive.angular_frequency / cfgmod.TWO_PI,
        drive.amplitude,
        float(cfg["trace"]["duration_s"]),
        float(cfg["trace"]["sample_rate_hz"]),
        noise,
    )


def cmd_trace(cfg: dict, out_dir: str) -> None:
    _, trace = _make_chain_trace(cfg)
    _write_text(os.path.join(out_dir, "trace.csv"), trace.to_csv())
    _write_text(
        os.path.join(out_dir, "trace_meta.toml"),
        _toml_section(
            "trace",
            {
                "sample_rate_hz": trace.sample_rate,
                "n_samples": trace.n_samples,
                "seed": cfg["run"]["seed"],
                "config_hash": cfgmod.config_hash(cfg),
            },
        ),
    )
    print(f"wrote {trace.n_samples} samples at {trace.sample_rate!r} Hz")


def cmd_spectrum(cfg: dict, out_dir: str) -> None:
    _, trace = _make_chain_trace(cfg)
    lk = cfgmod.build_lockin(cfg)
    if lk.time_constant > 0.0:
        demod = demodulate(trace, lk)
        _write_text(os.path.join(out_dir, "demod.csv"), demod.to_csv())
    spectrum = power_spectrum(trace)
    _write_text(os.path.join(out_dir, "spectrum.csv"), spectrum.to_csv())
    f_sig = float(cfg["drive"]["frequency_hz"])
    half = float(cfg["scaling"]["search_halfwidth_hz"])
    fit = fit_peak(spectrum, (f_sig - half, f_sig + half))
    _write_text(os.path.join(out_dir, "peak.toml"), fit.to_toml())
    print(
        f"peak: {fit.center!r} Hz (sigma {fit.sigma_center:.3e} Hz), "
        f"FWHM {fit.fwhm:.6e} Hz, amplitude {fit.amplitude:.6e} V"
    )


def cmd_scaling(cfg: dict, out_dir: str) -> None:
    setup = cfgmod.build_setup(cfg)
    sc = cfg["scaling"]
    report = scaling_campaign(
        setup,
        signal_frequency=float(cfg["drive"]["frequency_hz"]),
        signal_amplitude=float(cfg["drive"]["amplitude_t"]),
        sample_rate=float(cfg["trace"]["sample_rate_hz"]),
        noise=cfgmod.build_noise(cfg),
        resolution_durations=[float(t) for t in sc["resolution_t_s"]],
        precision_durations=[float(t) for t in sc["precision_t_s"]],
        n_seeds=int(sc["n_seeds"]),
        search_halfwidth=float(sc["search_halfwidth_hz"]),
    )
    _write_text(
        os.path.join(out_dir, "resolution.csv"),
        _csv(
            [
                (r.duration, r.fwhm, r.sigma_fwhm, r.center, r.sigma_center)
                for r in report.resolution_rows
            ],
            "duration_s,fwhm_hz,sigma_fwhm_hz,center_hz,sigma_center_hz",
        ),
    )
    _write_text(
        os.path.join(out_dir, "precision.csv"),
        _csv(
            [
                (r.duration, r.sigma_center, r.mean_center, r.n_seeds)
                for r in report.precision_rows
            ],
            "duration_s,sigma_center_hz,mean_center_hz,n_seeds",
        ),
    )
    _write_text(
        os.path.join(out_dir, "precision_raw.csv"),
        _csv(report.precision_raw, "duration_s,seed_index,center_hz"),
    )
    summary = {
        "resolution_slope": report.resolution_slope,
        "resolution_slope_stderr": report.resolution_slope_stderr,
        "fwhm_time_products": list(report.fwhm_time_products),
        "signal_recovered": list(report.recovered),
        "config_hash": cfgmod.config_hash(cfg),
        "seed": cfg["run"]["seed"],
        "seed_indices": list(range(int(sc["n_seeds"]))),
    }
    if report.precision_slope is not None:
        summary["precision_slope"] = report.precision_slope
        summary["precision_slope_stderr"] = report.precision_slope_stderr
    _write_text(os.path.join(out_dir, "summary.toml"), _toml_section("scaling", summary))
    print(
        f"resolution slope {report.resolution_slope:.4f} "
        f"+- {report.resolution_slope_stderr:.4f}; precision slope "
        f"{report.precision_slope!r}"
    )


def cmd_bandwidth(cfg: dict, out_dir: str) -> None:
    bw = cfg["bandwidth"]
    freqs = np.geomspace(
        float(bw["f_min_hz"]), float(bw["f_max_hz"]), int(bw["n_frequencies"])
    )
    results = bandwidth_sweep(
        [float(p) for p in bw["powers_w"]],
        float(bw["kappa_per_s_w"]),
        gamma2=float(cfg["sensor"]["gamma2_per_s"]),
        saturation=float(cfg["sensor"]["saturation"]),
        frequencies=freqs,
        field_amplitude=float(bw["field_amplitude_t"]),
        constants=cfgmod.build_constants(cfg),
        voltage=cfgmod.build_voltage(cfg),
    )
    rows = []
    for res in results:
        for f, a_n, a_v in zip(
            res.frequencies, res.normalized_amplitude, res.amplitude_volts
        ):
            rows.append((res.laser_power, res.gamma1, f, a_n, a_v))
    _write_text(
        os.path.join(out_dir, "bandwidth_curves.csv"),
        _csv(rows, "laser_power_w,gamma1_per_s,frequency_hz,normalized_amplitude,amplitude_v"),
    )
    _write_text(
        os.path.join(out_dir, "bandwidth.csv"),
        _csv(
            [(r.laser_power, r.gamma1, r.bandwidth) for r in results],
            "laser_power_w,gamma1_per_s,bandwidth_hz",
        ),
    )
    _write_text(
        os.path.join(out_dir, "summary.toml"),
        _toml_section(
            "bandwidth",
            {
                "powers_w": [r.laser_power for r in results],
                "bandwidth_hz": [r.bandwidth for r in results],
                "config_hash": cfgmod.config_hash(cfg),
            },
        ),
    )
    for r in results:
        print(f"power {r.laser_power!r} W: bandwidth {r.bandwidth:.6e} Hz")


def cmd_sensitivity(cfg: dict, out_dir: str) -> None:
    setup = cfgmod.build_setup(cfg)
    sens_cfg = cfg["sensitivity"]
    fields = np.geomspace(
        float(sens_cfg["b_lin_min_t"]),
        float(sens_cfg["b_lin_max_t"]),
        int(sens_cfg["n_linear"]),
    )
    result = estimate_sensitivity(
        setup,
        float(sens_cfg["frequency_hz"]),
        cfgmod.build_noise(cfg),
        linear_fields=fields,
        psd_duration=float(sens_cfg["psd_duration_s"]),
    )
    curve = response_curve(setup, result.frequency, fields)
    _write_text(
        os.path.join(out_dir, "response_linear.csv"),
        _csv(
            list(zip(curve.field_amplitudes, curve.v1_amplitude)),
            "field_t,v1_amplitude_v",
        ),
    )
    _write_text(
        os.path.join(out_dir, "summary.toml"),
        _toml_section(
            "sensitivity",
            {
                "frequency_hz": result.frequency,
                "slope_v_per_t": result.slope,
                "slope_sigma": result.slope_sigma,
                "noise_floor_v": result.noise_floor,
                "b_min_t": result.b_min,
                "sensitivity_t_per_sqrt_hz": result.sensitivity,
                "sensitivity_sigma": result.sensitivity_sigma,
                "config_hash": cfgmod.config_hash(cfg),
                "seed": cfg["run"]["seed"],
            },
        ),
    )
    print(
        f"sensitivity at {result.frequency!r} Hz: "
        f"{result.sensitivity:.3e} T/sqrt(Hz) (k = {result.slope:.4e} V/T)"
    )


def cmd_dynrange(cfg: dict, out_dir: str) -> None:
    setup = cfgmod.build_setup(cfg)
    dr_cfg = cfg["dynrange"]
    fields = np.geomspace(
        float(dr_cfg["b_min_t"]), float(dr_cfg["b_max_t"]), int(dr_cfg["n_fields"])
    )
    result = estimate_dynamic_range(
        setup,
        float(dr_cfg["frequency_hz"]),
        cfgmod.build_noise(cfg),
        response_fields=fields,
    )
    curve = response_curve(setup, result.frequency, fields)
    _write_text(
        os.path.join(out_dir, "response_curve.csv"),
        _csv(
            list(zip(curve.field_amplitudes, curve.v1_amplitude)),
            "field_t,v1_amplitude_v",
        ),
    )
    _write_text(
        os.path.join(out_dir, "summary.toml"),
        _toml_section(
            "dynrange",
            {
                "frequency_hz": result.frequency,
                "b_max_t": result.b_max,
                "b_min_t": result.b_min,
                "dynamic_range_db": result.dynamic_range_db,
                "peak_fields_t": list(result.peak_fields),
                "config_hash": cfgmod.config_hash(cfg),
                "seed": cfg["run"]["seed"],
            },
        ),
    )
    print(
        f"dynamic range at {result.frequency!r} Hz: {result.dynamic_range_db:.1f} dB "
        f"(b_max {result.b_max:.3e} T, b_min {result.b_min:.3e} T)"
    )


def cmd_selftest(cfg: dict, out_dir: str) -> None:
    results = selftest_mod.run_all()
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}: {res.detail}")
    _write_text(
        os.path.join(out_dir, "selftest.toml"),
        "".join(
            _toml_section(
                f"check.{i}", {"name": r.name, "passed": r.passed, "detail": r.detail}
            )
            for i, r in enumerate(results)
        ),
    )
    if not all(r.passed for r in results):
        raise RunFailure("one or more self-test checks failed")


_HANDLERS = {
    "steady": cmd_steady,
    "trace": cmd_trace,
    "spectrum": cmd_spectrum,
    "scaling": cmd_scaling,
    "bandwidth": cmd_bandwidth,
    "sensitivity": cmd_sensitivity,
    "dynrange": cmd_dynrange,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steadymag",
        description="Dissipative steady-state magnetometer simulator",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key (repeatable; TOML value syntax)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, args.subcommand, args.overrides)
        if args.seed is not None:
            cfg["run"]["seed"] = int(args.seed)
        out_dir = os.path.join(args.out, args.subcommand)
        os.makedirs(out_dir, exist_ok=True)
        _emit_echo(cfg, out_dir)
        _HANDLERS[args.subcommand](cfg, out_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RunFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
