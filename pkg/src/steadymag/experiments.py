"""End-to-end virtual experiments.

Each experiment drives the chain sensor dynamics -> photodiode voltages ->
lock-in / FFT estimation and reduces to the quantities of interest:
detection bandwidth vs pumping, response curve with its hyperfine
saturation structure, sensitivity, dynamic range, and the
resolution/precision scaling of spectral frequency estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    ensemble_p0,
    integrate_trajectory,
    p0_slope,
    quasi_static_limit,
    steady_state_analytic,
)
from .errors import (
    FitError,
    NonlinearResponseError,
    ParameterError,
    SweepRangeError,
)
from .lockin import LockinConfig, scope, settled_amplitude
from .model import (
    UNIFORM_WEIGHTS,
    DerivedRates,
    DriveField,
    HyperfineEnsemble,
    PhysicalConstants,
    SensorParams,
    derive_rates,
    microwave_frequency_for_detuning,
    optimal_detuning,
)
from .photophysics import (
    NoiseModel,
    TimeTrace,
    VoltageModel,
    drift_correct,
    gamma1_from_power,
    synthesize_voltages,
)
from .spectro import (
    PrecisionRow,
    ResolutionRow,
    band_noise_density,
    fit_peak,
    loglog_slope,
    power_spectrum,
)

HALF_POWER = 1.0 / math.sqrt(2.0)

# stream tags for independent noise draws within one experiment
_STREAM_SENSITIVITY = 101
_STREAM_SCALING_RESOLUTION = 102
_STREAM_SCALING_PRECISION = 103


@dataclass(frozen=True)
class SensorSetup:
    """One operating point of the full instrument.

    ``params`` is the m_I = 0 reference sensor; the hyperfine ensemble
    shares every field except the nuclear projection.
    """

    params: SensorParams
    constants: PhysicalConstants
    voltage: VoltageModel
    hyperfine_weights: tuple[float, float, float] = UNIFORM_WEIGHTS

    def rates(self) -> DerivedRates:
        return derive_rates(self.params, self.constants)

    def ensemble(self) -> HyperfineEnsemble:
        return HyperfineEnsemble(self.params, self.hyperfine_weights)


def make_setup(
    *,
    gamma1: float,
    gamma2: float,
    saturation: float | None = None,
    drive_amplitude: float | None = None,
    detuning: float | str = "optimal",
    static_field: float = 0.0,
    constants: PhysicalConstants | None = None,
    voltage: VoltageModel | None = None,
    hyperfine_weights: tuple[float, float, float] = UNIFORM_WEIGHTS,
) -> SensorSetup:
    """Build an operating point from rates plus either s or B1.

    ``detuning`` is the m_I = 0 rotating-frame detuning in rad/s, or
    "optimal" for sqrt(1+s)/(sqrt(3) T2).
    """
    constants = constants or PhysicalConstants()
    voltage = voltage or VoltageModel()
    if (saturation is None) == (drive_amplitude is None):
        raise ParameterError("specify exactly one of saturation or drive_amplitude")
    t1 = 1.0 / gamma1
    t2 = 1.0 / (gamma2 + 0.5 * gamma1)
    if drive_amplitude is None:
        if saturation < 0.0:
            raise ParameterError(f"saturation must be non-negative, got {saturation!r}")
        drive_amplitude = math.sqrt(saturation / (t1 * t2)) / abs(
            constants.gyromagnetic_ratio
        )
    if detuning == "optimal":
        s = (constants.gyromagnetic_ratio * drive_amplitude) ** 2 * t1 * t2
        detuning_value = math.sqrt(1.0 + s) / (math.sqrt(3.0) * t2)
    elif isinstance(detuning, str):
        raise ParameterError(f"detuning must be a number or 'optimal', got {detuning!r}")
    else:
        detuning_value = float(detuning)
    params = SensorParams(
        static_field=static_field,
        drive_amplitude=drive_amplitude,
        microwave_frequency=microwave_frequency_for_detuning(
            detuning_value, static_field, 0, constants
        ),
        gamma1=gamma1,
        gamma2=gamma2,
        nuclear_projection=0,
    )
    return SensorSetup(
        params=params,
        constants=constants,
        voltage=voltage,
        hyperfine_weights=hyperfine_weights,
    )


@dataclass(frozen=True, eq=False)
class BandwidthResult:
    laser_power: float  # W
    gamma1: float  # 1/s
    frequencies: np.ndarray  # Hz
    normalized_amplitude: np.ndarray
    amplitude_volts: np.ndarray
    bandwidth: float  # Hz, 1/sqrt(2) crossing


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    field_amplitudes: np.ndarray  # Tesla
    v1_amplitude: np.ndarray  # volts, lock-in fundamental
    frequency: float  # Hz
    mode: str  # "quasistatic" or "trajectory"


@dataclass(frozen=True)
class SensitivityResult:
    frequency: float  # Hz
    slope: float  # V/T
    slope_sigma: float
    noise_floor: float  # V in a 1 Hz bandwidth
    b_min: float  # Tesla
    sensitivity: float  # T/sqrt(Hz)
    sensitivity_sigma: float


@dataclass(frozen=True)
class DynamicRangeResult:
    frequency: float
    b_max: float  # Tesla, first saturation peak
    b_min: float  # Tesla
    dynamic_range_db: float
    peak_fields: tuple[float, ...]
    sensitivity: SensitivityResult


@dataclass(frozen=True)
class ScalingReport:
    signal_frequency: float
    resolution_rows: tuple[ResolutionRow, ...]
    resolution_slope: float
    resolution_slope_stderr: float
    fwhm_time_products: tuple[float, ...]
    precision_rows: tuple[PrecisionRow, ...]
    precision_raw: tuple[tuple[float, int, float], ...]  # (duration, seed, center)
    precision_slope: float | None
    precision_slope_stderr: float | None
    recovered: tuple[bool, ...]


def _settled_v1_amplitude(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    voltage: VoltageModel,
    f_ac: float,
    b_ac: float,
    filter_order: int = 4,
) -> float:
    """Trajectory -> voltage -> lock-in amplitude at the drive frequency."""
    from .dynamics import required_time_step

    drive = DriveField(amplitude=b_ac, angular_frequency=2.0 * math.pi * f_ac)
    dt = required_time_step(params, rates, constants, drive)
    settle = 12.0 * max(rates.t1, rates.t2)
    tau = 2.0 / f_ac
    duration = 3.0 * (settle + 10.0 * tau)
    n_steps = int(math.ceil(duration / dt))
    times = np.arange(n_steps + 1) * dt
    init = steady_state_analytic(params, rates, constants, b=drive.value(0.0))
    traj = integrate_trajectory(params, rates, constants, drive, times, init)
    trace = TimeTrace(
        sample_rate=1.0 / dt, start_time=0.0, v1=voltage.v1_of_p0(traj.p0)
    )
    cfg = LockinConfig(
        reference_frequency=f_ac, time_constant=tau, filter_order=filter_order
    )
    return settled_amplitude(trace, cfg).value


def _half_power_crossing(frequencies: np.ndarray, normalized: np.ndarray) -> float:
    """First 1/sqrt(2) crossing, interpolated linearly in log-frequency."""
    below = np.nonzero(normalized < HALF_POWER)[0]
    if below.size == 0:
        raise SweepRangeError(
            "no 1/sqrt(2) crossing in the frequency grid: amplitude stays at "
            f"{normalized.min():.4f} (endpoints {normalized[0]:.4f}, {normalized[-1]:.4f})"
        )
    i = int(below[0])
    if i == 0:
        raise SweepRangeError(
            "first grid point is already below 1/sqrt(2); extend the grid downward "
            f"(endpoints {normalized[0]:.4f}, {normalized[-1]:.4f})"
        )
    f0, f1 = math.log(frequencies[i - 1]), math.log(frequencies[i])
    a0, a1 = normalized[i - 1], normalized[i]
    frac = (a0 - HALF_POWER) / (a0 - a1)
    return math.exp(f0 + frac * (f1 - f0))


def bandwidth_sweep(
    powers,
    kappa: float,
    *,
    gamma2: float,
    saturation: float,
    frequencies,
    field_amplitude: float,
    detuning: float | str = "optimal",
    static_field: float = 0.0,
    constants: PhysicalConstants | None = None,
    voltage: VoltageModel | None = None,
    filter_order: int = 4,
) -> list[BandwidthResult]:
    """Detection bandwidth vs laser power at fixed saturation.

    For each power the pumping rate is kappa*power, the drive amplitude is
    rescaled to hold s fixed, and the m_I = 0 sensor is integrated at every
    grid frequency; the settled lock-in amplitude, normalized to the first
    grid point, is interpolated for its 1/sqrt(2) crossing.
    """
    frequencies = np.asarray(sorted(float(f) for f in frequencies))
    if frequencies.size < 3:
        raise ParameterError("frequency grid needs at least 3 points")
    results = []
    for power in powers:
        gamma1 = gamma1_from_power(power, kappa)
        setup = make_setup(
            gamma1=gamma1,
            gamma2=gamma2,
            saturation=saturation,
            detuning=detuning,
            static_field=static_field,
            constants=constants,
            voltage=voltage,
        )
        rates = setup.rates()
        linearity = abs(
            setup.constants.gyromagnetic_ratio * field_amplitude * rates.t2
        )
        if linearity > 0.05:
            raise ParameterError(
                f"field amplitude leaves the linear regime at power {power} W: "
                f"|gamma_e*b*T2| = {linearity:.3f} > 0.05"
            )
        amps = np.array(
            [
                _settled_v1_amplitude(
                    setup.params,
                    rates,
                    setup.constants,
                    setup.voltage,
                    f,
                    field_amplitude,
                    filter_order,
                )
                for f in frequencies
            ]
        )
        normalized = amps / amps[0]
        results.append(
            BandwidthResult(
                laser_power=float(power),
                gamma1=gamma1,
                frequencies=frequencies,
                normalized_amplitude=normalized,
                amplitude_volts=amps,
                bandwidth=_half_power_crossing(frequencies, normalized),
            )
        )
    return results


def _quasistatic_fundamental(
    setup: SensorSetup, field_amplitudes: np.ndarray, n_theta: int
) -> np.ndarray:
    """Lock-in fundamental of ensemble P0 under one cycle of the drive."""
    theta = 2.0 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    phasor = np.exp(-1.0j * theta)
    cos_t = np.cos(theta)
    fundamental = np.zeros(field_amplitudes.size, dtype=complex)
    for weight, member in setup.ensemble().members():
        if weight == 0.0:
            continue
        rates = derive_rates(member, setup.constants)
        b = field_amplitudes[:, None] * cos_t[None, :]
        dt = (rates.detuning - setup.constants.gyromagnetic_ratio * b) * rates.t2
        s = rates.saturation
        p0 = (2.0 + s + 2.0 * dt * dt) / (2.0 * (1.0 + s + dt * dt))
        fundamental += weight * 2.0 * (p0 * phasor[None, :]).mean(axis=1)
    return np.abs(fundamental)


def response_curve(
    setup: SensorSetup,
    f_ac: float,
    field_amplitudes,
    *,
    mode: str = "auto",
    n_theta: int = 4096,
    filter_order: int = 4,
) -> ResponseCurve:
    """Lock-in fundamental amplitude of v1 versus the test-field amplitude.

    Below the quasi-static limit the ensemble steady state is evaluated
    pointwise over one drive cycle; otherwise every amplitude is time
    integrated. The curve is linear at small fields and saturates with one
    local maximum per hyperfine line at large fields.
    """
    field_amplitudes = np.asarray(sorted(float(b) for b in field_amplitudes))
    rates0 = setup.rates()
    qs_limit = quasi_static_limit(rates0)
    if mode == "auto":
        mode = "quasistatic" if f_ac <= qs_limit else "trajectory"
    if mode == "quasistatic":
        if f_ac > qs_limit:
            raise ParameterError(
                f"f_ac = {f_ac:.6g} Hz exceeds the quasi-static limit {qs_limit:.6g} Hz"
            )
        fundamental = _quasistatic_fundamental(setup, field_amplitudes, n_theta)
        v1m = setup.voltage.gain * setup.voltage.contrast * fundamental
    elif mode == "trajectory":
        v1m = np.empty(field_amplitudes.size)
        for i, b_ac in enumerate(field_amplitudes):
            acc = 0.0
            for weight, member in setup.ensemble().members():
                if weight == 0.0:
                    continue
                rates = derive_rates(member, setup.constants)
                acc += weight * _settled_v1_amplitude(
                    member, rates, setup.constants, setup.voltage,
                    f_ac, b_ac, filter_order,
                )
            v1m[i] = acc
    else:
        raise ParameterError(
            f"mode must be 'auto', 'quasistatic', or 'trajectory', got {mode!r}"
        )
    return ResponseCurve(
        field_amplitudes=field_amplitudes, v1_amplitude=v1m, frequency=f_ac, mode=mode
    )


def ensemble_slope(setup: SensorSetup) -> float:
    """First-order dv1/db of the ensemble-averaged fluorescence (V/T)."""
    total = 0.0
    for weight, member in setup.ensemble().members():
        if weight == 0.0:
            continue
        total += weight * p0_slope(derive_rates(member, setup.constants), setup.constants)
    return setup.voltage.gain * setup.voltage.contrast * total


def estimate_sensitivity(
    setup: SensorSetup,
    f_ac: float,
    noise: NoiseModel,
    *,
    linear_fields=None,
    psd_duration: float = 2.0,
    psd_sample_rate: float | None = None,
    band_fraction: float = 0.2,
    seed_index: int = 0,
) -> SensitivityResult:
    """Minimum detectable field per sqrt(Hz) at one signal frequency.

    Fits v1m = k*b over the linear grid, measures the noise floor of a
    signal-free synthesized trace in a 1 Hz bandwidth around f_ac, and
    reports b_min = floor/k.
    """
    if linear_fields is None:
        linear_fields = np.geomspace(2e-9, 5e-8, 10)
    curve = response_curve(setup, f_ac, linear_fields)
    b = curve.field_amplitudes
    v = curve.v1_amplitude
    k = float(np.dot(v, b) / np.dot(b, b))
    residual = v - k * b
    rel_residual = float(np.linalg.norm(residual) / np.linalg.norm(v))
    if rel_residual > 0.02:
        raise NonlinearResponseError(
            f"linear fit residual {rel_residual:.3%} exceeds 2%; "
            "shrink the amplitude grid"
        )
    if k <= 0.0:
        raise FitError(f"non-positive response slope k = {k:.3e} V/T")
    dof = max(b.size - 1, 1)
    k_sigma = float(math.sqrt(np.dot(residual, residual) / dof / np.dot(b, b)))

    fs = psd_sample_rate if psd_sample_rate is not None else max(5.0 * f_ac, 100.0)
    n = int(round(psd_duration * fs))
    p0_flat = np.full(n, float(ensemble_p0(setup.ensemble(), setup.constants, 0.0)))
    trace = synthesize_voltages(
        p0_flat,
        fs,
        setup.voltage,
        noise,
        stream=(_STREAM_SENSITIVITY, seed_index),
    )
    trace = drift_correct(trace)
    trace = scope(trace, LockinConfig(reference_frequency=0.0, time_constant=0.0))
    spectrum = power_spectrum(trace)
    floor = band_noise_density(
        spectrum, f_ac * (1.0 - band_fraction), f_ac * (1.0 + band_fraction)
    )  # V/sqrt(Hz) == V in a 1 Hz bandwidth
    b_min = floor / k
    return SensitivityResult(
        frequency=f_ac,
        slope=k,
        slope_sigma=k_sigma,
        noise_floor=floor,
        b_min=b_min,
        sensitivity=b_min,
        sensitivity_sigma=b_min * k_sigma / k,
    )


def estimate_dynamic_range(
    setup: SensorSetup,
    f_ac: float,
    noise: NoiseModel,
    *,
    response_fields=None,
    n_theta: int = 4096,
    seed_index: int = 0,
) -> DynamicRangeResult:
    """20*lg(b_max/b_min): first saturation peak over the noise-limited floor."""
    if response_fields is None:
        response_fields = np.geomspace(1e-6, 5e-4, 360)
    curve = response_curve(setup, f_ac, response_fields, n_theta=n_theta)
    v = curve.v1_amplitude
    interior = np.nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))[0] + 1
    if interior.size == 0:
        raise SweepRangeError(
            "no saturation peak inside the amplitude grid; extend it upward "
            f"(curve still rising at {curve.field_amplitudes[-1]:.3e} T)"
            if v[-1] >= v[-2]
            else "no local maximum found in the amplitude grid"
        )
    peaks = tuple(float(curve.field_amplitudes[i]) for i in interior)
    b_max = peaks[0]
    sens = estimate_sensitivity(setup, f_ac, noise, seed_index=seed_index)
    return DynamicRangeResult(
        frequency=f_ac,
        b_max=b_max,
        b_min=sens.b_min,
        dynamic_range_db=20.0 * math.log10(b_max / sens.b_min),
        peak_fields=peaks,
        sensitivity=sens,
    )


def chain_trace(
    setup: SensorSetup,
    signal_frequency: float,
    signal_amplitude: float,
    duration: float,
    sample_rate: float,
    noise: NoiseModel,
    stream: tuple[int, ...] = (),
) -> TimeTrace:
    """Full measurement chain for a quasi-static sinusoidal field:
    ensemble steady state -> voltages -> drift correction -> scope."""
    rates = setup.rates()
    qs_limit = quasi_static_limit(rates)
    if signal_frequency > qs_limit:
        raise ParameterError(
            f"signal frequency {signal_frequency:.6g} Hz exceeds the quasi-static "
            f"limit {qs_limit:.6g} Hz; use trajectory integration instead"
        )
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    b = signal_amplitude * np.cos(2.0 * math.pi * signal_frequency * t)
    p0 = ensemble_p0(setup.ensemble(), setup.constants, b)
    trace = synthesize_voltages(p0, sample_rate, setup.voltage, noise, stream=stream)
    trace = drift_correct(trace)
    return scope(trace, LockinConfig(reference_frequency=0.0, time_constant=0.0))


def scaling_campaign(
    setup: SensorSetup,
    *,
    signal_frequency: float = 9.0,
    signal_amplitude: float = 1e-6,
    sample_rate: float = 100.0,
    noise: NoiseModel | None = None,
    resolution_durations=(10.0, 30.0, 100.0, 300.0, 1000.0),
    precision_durations=(10.0, 20.0, 50.0, 100.0, 300.0),
    n_seeds: int = 50,
    search_halfwidth: float = 3.0,
) -> ScalingReport:
    """Resolution and precision scaling of the full chain vs record length.

    Resolution rows use one noise realization per duration; precision rows
    take the across-seed scatter of the fitted center (n_seeds each).
    """
    noise = noise or NoiseModel()
    band = (signal_frequency - search_halfwidth, signal_frequency + search_halfwidth)

    resolution_rows = []
    for i, duration in enumerate(sorted(resolution_durations)):
        trace = chain_trace(
            setup, signal_frequency, signal_amplitude, duration, sample_rate,
            noise, stream=(_STREAM_SCALING_RESOLUTION, i),
        )
        fit = fit_peak(power_spectrum(trace), band)
        resolution_rows.append(
            ResolutionRow(
                duration=trace.duration,
                fwhm=fit.fwhm,
                sigma_fwhm=fit.sigma_fwhm,
                center=fit.center,
                sigma_center=fit.sigma_center,
            )
        )
    res_slope, res_stderr = loglog_slope(
        [r.duration for r in resolution_rows],
        [r.fwhm for r in resolution_rows],
        sigma_ln_y=[r.sigma_fwhm / r.fwhm for r in resolution_rows],
    )
    products = tuple(r.fwhm * r.duration for r in resolution_rows)

    precision_rows = []
    precision_raw = []
    recovered = []
    for i, duration in enumerate(sorted(precision_durations)):
        centers = np.empty(n_seeds)
        for k in range(n_seeds):
            trace = chain_trace(
                setup, signal_frequency, signal_amplitude, duration, sample_rate,
                noise, stream=(_STREAM_SCALING_PRECISION, i, k),
            )
            centers[k] = fit_peak(power_spectrum(trace), band).center
            precision_raw.append((float(duration), k, float(centers[k])))
        sigma = float(centers.std(ddof=1))
        mean = float(centers.mean())
        precision_rows.append(
            PrecisionRow(
                duration=duration, sigma_center=sigma, mean_center=mean, n_seeds=n_seeds
            )
        )
        recovered.append(abs(mean - signal_frequency) <= sigma if sigma > 0.0 else True)
    if len(precision_rows) < 3 or any(r.sigma_center == 0.0 for r in precision_rows):
        prec_slope, prec_stderr = None, None
    else:
        prec_slope, prec_stderr = loglog_slope(
            [r.duration for r in precision_rows],
            [r.sigma_center for r in precision_rows],
        )

    return ScalingReport(
        signal_frequency=signal_frequency,
        resolution_rows=tuple(resolution_rows),
        resolution_slope=res_slope,
        resolution_slope_stderr=res_stderr,
        fwhm_time_products=products,
        precision_rows=tuple(precision_rows),
        precision_raw=tuple(precision_raw),
        precision_slope=prec_slope,
        precision_slope_stderr=prec_stderr,
        recovered=tuple(recovered),
    )
