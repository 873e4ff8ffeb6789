"""Digital dual-phase lock-in amplifier.

Demodulation multiplies by 2*cos / -2*sin of the reference so that R reads
the physical amplitude of a sinusoid (not its RMS). The low-pass filter is
a cascade of first-order exponential smoothing stages, each with the
configured time constant; DC gain of each stage is exactly 1. A zero time
constant selects the oscilloscope passthrough mode instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfilter_zi

from .errors import ConfigError, InsufficientDataError, ParameterError
from .photophysics import TimeTrace


@dataclass(frozen=True)
class LockinConfig:
    reference_frequency: float  # Hz
    time_constant: float  # s; 0 selects scope mode
    filter_order: int = 4
    reference_phase: float = 0.0  # rad

    def __post_init__(self) -> None:
        if self.time_constant < 0.0:
            raise ParameterError(f"time_constant must be >= 0, got {self.time_constant!r}")
        if not 1 <= self.filter_order <= 8:
            raise ParameterError(f"filter_order must be in [1, 8], got {self.filter_order!r}")
        if self.reference_frequency < 0.0:
            raise ParameterError("reference_frequency must be >= 0")


@dataclass(frozen=True, eq=False)
class DemodOutput:
    """In-phase and quadrature series; R and theta are derived exactly."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(self.y, self.x)

    def to_csv(self) -> str:
        lines = ["time_s,X_V,Y_V,R_V,theta_rad"]
        r = self.r
        th = self.theta
        for i in range(self.times.size):
            lines.append(
                f"{float(self.times[i])!r},{float(self.x[i])!r},"
                f"{float(self.y[i])!r},{float(r[i])!r},{float(th[i])!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SettledAmplitude:
    value: float
    stderr: float
    n_averaged: int


def _lowpass_cascade(x: np.ndarray, dt: float, tau: float, order: int) -> np.ndarray:
    # each stage starts settled at the record mean: a constant input passes
    # through exactly, and a mixed sinusoid starts near its final value
    # instead of decaying from a large instantaneous sample
    a = math.exp(-dt / tau)
    b = [1.0 - a]
    den = [1.0, -a]
    zi = lfilter_zi(b, den) * float(x.mean())
    for _ in range(order):
        x, _ = lfilter(b, den, x, zi=zi)
    return x


def demodulate(trace: TimeTrace, cfg: LockinConfig) -> DemodOutput:
    """Dual-phase demodulation at the reference frequency.

    X = LPF[2 v cos(2 pi f_ref t + theta_ref)], Y = LPF[-2 v sin(...)]. For
    a steady sinusoid a*cos(2 pi f_ref t + phi) the settled outputs give
    R -> a and theta -> phi - theta_ref. The input is AC-coupled (record
    mean removed) so a large DC offset cannot leak into the outputs through
    filter transients.
    """
    if cfg.time_constant == 0.0:
        raise ConfigError("time_constant is 0: use scope() for the passthrough path")
    if cfg.reference_frequency >= trace.sample_rate / 2.0:
        raise ConfigError(
            f"reference frequency {cfg.reference_frequency:.6g} Hz violates Nyquist "
            f"for sample rate {trace.sample_rate:.6g} Hz"
        )
    t = trace.times
    phase = 2.0 * math.pi * cfg.reference_frequency * t + cfg.reference_phase
    dt = 1.0 / trace.sample_rate
    v = trace.v1 - float(trace.v1.mean())
    x = _lowpass_cascade(2.0 * v * np.cos(phase), dt, cfg.time_constant, cfg.filter_order)
    y = _lowpass_cascade(-2.0 * v * np.sin(phase), dt, cfg.time_constant, cfg.filter_order)
    return DemodOutput(times=t, x=x, y=y)


def scope(trace: TimeTrace, cfg: LockinConfig) -> TimeTrace:
    """Oscilloscope mode: identity passthrough of the v1 samples."""
    if cfg.time_constant != 0.0:
        raise ConfigError(
            f"scope mode requires time_constant = 0, got {cfg.time_constant!r}"
        )
    if cfg.reference_frequency != 0.0:
        raise ConfigError(
            f"scope mode requires reference_frequency = 0, got {cfg.reference_frequency!r}"
        )
    return trace


def settled_amplitude(trace: TimeTrace, cfg: LockinConfig) -> SettledAmplitude:
    """Mean of R over the final third of the record, with its standard error.

    The record must be at least 10 time constants long (and long enough for
    whatever produced the signal to have settled, which is the caller's
    responsibility).
    """
    duration = trace.duration
    if duration < 10.0 * cfg.time_constant:
        raise InsufficientDataError(
            f"record of {duration:.3e} s is shorter than 10 time constants "
            f"({10.0 * cfg.time_constant:.3e} s)"
        )
    r = demodulate(trace, cfg).r
    tail = r[-(r.size // 3):]
    stderr = float(tail.std(ddof=1) / math.sqrt(tail.size)) if tail.size > 1 else 0.0
    return SettledAmplitude(value=float(tail.mean()), stderr=stderr, n_averaged=int(tail.size))
