"""Optical readout chain: populations to photodiode voltages.

v1 is the fluorescence channel, proportional to P0 through an affine
contrast model; v2 is the laser reference used to cancel the common
multiplicative power drift. Noise is white Gaussian per channel plus a
shared low-frequency drift factor; everything is reproducible from the
noise-model seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import decimate as _decimate
from scipy.signal import lfilter

from .errors import DataError, ParameterError
from .seeding import STREAM_DRIFT, STREAM_V1_NOISE, STREAM_V2_NOISE, rng_for

GAMMA1_FLOOR = 1e-3  # 1/s; keeps the steady-state solver nonsingular at zero power


@dataclass(frozen=True)
class VoltageModel:
    """v1 = gain*(offset + contrast*P0)*d(t), v2 = reference_level*d(t)."""

    gain: float = 1.0
    offset: float = 0.7
    contrast: float = 0.3
    reference_level: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.contrast <= 1.0:
            raise ParameterError(f"contrast must be in (0, 1], got {self.contrast!r}")
        if self.offset < 0.0:
            raise ParameterError(f"offset must be non-negative, got {self.offset!r}")
        if self.gain <= 0.0 or self.reference_level <= 0.0:
            raise ParameterError("gain and reference_level must be positive")

    def v1_of_p0(self, p0):
        return self.gain * (self.offset + self.contrast * p0)


@dataclass(frozen=True)
class NoiseModel:
    """White noise per channel (V/sqrt(Hz)) plus common relative drift.

    The drift factor is 1 + drift_amplitude*u(t), with u a unit-variance
    AR(1) process whose corner frequency is drift_corner_hz. Identical
    seeds (and stream paths) give bit-identical noise.
    """

    v1_noise_density: float = 0.0
    v2_noise_density: float = 0.0
    drift_amplitude: float = 0.0
    drift_corner_hz: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("v1_noise_density", "v2_noise_density", "drift_amplitude"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        if self.drift_corner_hz < 0.0:
            raise ParameterError("drift_corner_hz must be non-negative")


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Uniformly sampled voltage record; v2 is optional.

    The sample rate must exceed twice the highest signal frequency of
    interest; that is the caller's contract, not checked here.
    """

    sample_rate: float
    start_time: float
    v1: np.ndarray
    v2: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.sample_rate <= 0.0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate!r}")
        v1 = np.asarray(self.v1, dtype=float)
        object.__setattr__(self, "v1", v1)
        if self.v2 is not None:
            v2 = np.asarray(self.v2, dtype=float)
            if v2.shape != v1.shape:
                raise DataError(
                    f"channel lengths differ: v1 has {v1.size} samples, v2 has {v2.size}"
                )
            object.__setattr__(self, "v2", v2)

    @property
    def n_samples(self) -> int:
        return int(self.v1.size)

    @property
    def duration(self) -> float:
        return self.v1.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.v1.size) / self.sample_rate

    def to_csv(self) -> str:
        """CSV text with header time_s,v1_V,v2_V (v2 blank when absent)."""
        lines = ["time_s,v1_V,v2_V"]
        t = self.times
        if self.v2 is None:
            for i in range(self.v1.size):
                lines.append(f"{float(t[i])!r},{float(self.v1[i])!r},")
        else:
            for i in range(self.v1.size):
                lines.append(f"{float(t[i])!r},{float(self.v1[i])!r},{float(self.v2[i])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TimeTrace":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0].strip() != "time_s,v1_V,v2_V":
            raise DataError("expected CSV header 'time_s,v1_V,v2_V'")
        t, v1, v2 = [], [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 3:
                raise DataError(f"malformed CSV row: {ln!r}")
            t.append(float(parts[0]))
            v1.append(float(parts[1]))
            v2.append(float(parts[2]) if parts[2] != "" else math.nan)
        t = np.asarray(t)
        if t.size < 2:
            raise DataError("trace needs at least two samples")
        dt = np.diff(t)
        if np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
            raise DataError("non-uniform sampling in CSV trace")
        v2_arr = np.asarray(v2)
        has_v2 = not np.isnan(v2_arr).any()
        return cls(
            sample_rate=1.0 / dt[0],
            start_time=float(t[0]),
            v1=np.asarray(v1),
            v2=v2_arr if has_v2 else None,
        )


def gamma1_from_power(laser_power: float, kappa: float, floor: float = GAMMA1_FLOOR) -> float:
    """Linear pumping model gamma1 = kappa * power, clamped at a small floor.

    kappa is a calibration input (1/(s*W)); it is not derivable from first
    principles here.
    """
    if laser_power < 0.0:
        raise ParameterError(f"laser_power must be non-negative, got {laser_power!r}")
    if kappa <= 0.0:
        raise ParameterError(f"kappa must be positive, got {kappa!r}")
    gamma1 = kappa * laser_power
    if gamma1 < floor:
        warnings.warn(
            f"gamma1 = {gamma1:.3e} 1/s below floor; clamping to {floor:.3e} 1/s "
            "to keep the steady state nondegenerate",
            stacklevel=2,
        )
        return floor
    return gamma1


def _drift_factor(n: int, dt: float, noise: NoiseModel, stream: tuple[int, ...]) -> np.ndarray:
    if noise.drift_amplitude == 0.0:
        return np.ones(n)
    rng = rng_for(noise.seed, STREAM_DRIFT, *stream)
    a = math.exp(-2.0 * math.pi * noise.drift_corner_hz * dt)
    w = rng.standard_normal(n)
    x = math.sqrt(max(1.0 - a * a, 0.0)) * w
    x[0] = w[0]  # stationary start: unit variance from the first sample
    u = lfilter([1.0], [1.0, -a], x)
    return 1.0 + noise.drift_amplitude * u


def synthesize_voltages(
    p0: np.ndarray,
    sample_rate: float,
    model: VoltageModel,
    noise: NoiseModel,
    start_time: float = 0.0,
    stream: tuple[int, ...] = (),
) -> TimeTrace:
    """Turn a P0 sample series into a two-channel voltage trace.

    White noise per channel has per-sample standard deviation
    density*sqrt(sample_rate/2); both channels share one drift factor.
    ``stream`` distinguishes independent synthesis calls under one seed.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.ndim != 1 or p0.size == 0:
        raise DataError("p0 series must be a non-empty 1-d array")
    if p0.min() < -1e-9 or p0.max() > 1.0 + 1e-9:
        raise DataError(
            f"p0 samples must lie in [0, 1], got range [{p0.min():.3e}, {p0.max():.3e}]"
        )
    n = p0.size
    drift = _drift_factor(n, 1.0 / sample_rate, noise, stream)
    v1 = model.v1_of_p0(p0) * drift
    v2 = model.reference_level * drift
    if noise.v1_noise_density > 0.0:
        sigma = noise.v1_noise_density * math.sqrt(sample_rate / 2.0)
        v1 = v1 + sigma * rng_for(noise.seed, STREAM_V1_NOISE, *stream).standard_normal(n)
    if noise.v2_noise_density > 0.0:
        sigma = noise.v2_noise_density * math.sqrt(sample_rate / 2.0)
        v2 = v2 + sigma * rng_for(noise.seed, STREAM_V2_NOISE, *stream).standard_normal(n)
    return TimeTrace(sample_rate=sample_rate, start_time=start_time, v1=v1, v2=v2)


def drift_correct(trace: TimeTrace) -> TimeTrace:
    """Cancel common multiplicative drift: v1' = v1 * mean(v2)/v2.

    The reference channel is replaced by its mean, which makes the
    correction idempotent. Requires strictly positive v2 samples.
    """
    if trace.v2 is None:
        raise DataError("drift correction needs the reference channel v2")
    if trace.v2.min() <= 0.0:
        raise DataError(
            f"non-positive v2 sample ({trace.v2.min():.3e} V); cannot form v1/v2"
        )
    v2_mean = float(trace.v2.mean())
    v1 = trace.v1 * (v2_mean / trace.v2)
    v2 = np.full_like(trace.v2, v2_mean)
    return TimeTrace(
        sample_rate=trace.sample_rate, start_time=trace.start_time, v1=v1, v2=v2
    )


def decimate_trace(trace: TimeTrace, factor: int) -> TimeTrace:
    """Anti-aliased downsampling of both channels by an integer factor."""
    if factor < 1 or int(factor) != factor:
        raise ParameterError(f"decimation factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return trace
    v1 = _decimate(trace.v1, factor, ftype="fir", zero_phase=True)
    v2 = None
    if trace.v2 is not None:
        v2 = _decimate(trace.v2, factor, ftype="fir", zero_phase=True)
    return TimeTrace(
        sample_rate=trace.sample_rate / factor,
        start_time=trace.start_time,
        v1=v1,
        v2=v2,
    )
