"""Sensor parameters, physical constants, and derived rates.

Unit convention: every frequency-like quantity is stored as an angular
frequency in rad/s; magnetic fields are in Tesla; times in seconds. Hz
appears only at I/O boundaries (config files, CSV output). The
gyromagnetic ratio and the hyperfine coupling carry their negative signs
explicitly; downstream response signs depend on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

from .errors import ParameterError

TWO_PI = 2.0 * math.pi

NUCLEAR_PROJECTIONS = (-1, 0, 1)

UNIFORM_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class PhysicalConstants:
    """Spin-system constants; defaults describe the NV ground-state triplet.

    zero_field_splitting : rad/s
    gyromagnetic_ratio   : rad/s per Tesla, negative
    hyperfine_coupling   : rad/s, negative
    """

    zero_field_splitting: float = TWO_PI * 2.87e9
    gyromagnetic_ratio: float = -TWO_PI * 28e9
    hyperfine_coupling: float = -TWO_PI * 2.16e6


@dataclass(frozen=True)
class SensorParams:
    """Operating point of the driven dissipative two-level sensor.

    static_field        : B0 along the sensor axis, Tesla
    drive_amplitude     : microwave field amplitude B1, Tesla
    microwave_frequency : drive angular frequency, rad/s
    gamma1              : amplitude damping (pumping) rate, 1/s, > 0
    gamma2              : pure dephasing rate, 1/s, >= 0
    nuclear_projection  : m_I of the host nuclear spin, in {-1, 0, +1}
    """

    static_field: float
    drive_amplitude: float
    microwave_frequency: float
    gamma1: float
    gamma2: float
    nuclear_projection: int = 0

    def __post_init__(self) -> None:
        if not self.gamma1 > 0.0:
            raise ParameterError(f"gamma1 must be positive, got {self.gamma1!r}")
        if self.gamma2 < 0.0:
            raise ParameterError(f"gamma2 must be non-negative, got {self.gamma2!r}")
        if self.drive_amplitude < 0.0:
            raise ParameterError(
                f"drive_amplitude must be non-negative, got {self.drive_amplitude!r}"
            )
        if self.nuclear_projection not in NUCLEAR_PROJECTIONS:
            raise ParameterError(
                f"nuclear_projection must be one of {NUCLEAR_PROJECTIONS}, "
                f"got {self.nuclear_projection!r}"
            )


@dataclass(frozen=True)
class DerivedRates:
    """Rates derived from a SensorParams: T1, T2, saturation s, detuning."""

    t1: float
    t2: float
    saturation: float
    detuning: float


@dataclass(frozen=True)
class DriveField:
    """Sinusoidal test field b(t) = amplitude * cos(omega*t + phase)."""

    amplitude: float
    angular_frequency: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude < 0.0:
            raise ParameterError(f"amplitude must be non-negative, got {self.amplitude!r}")

    def value(self, t):
        import numpy as np

        return self.amplitude * np.cos(self.angular_frequency * t + self.phase)


@dataclass(frozen=True)
class HyperfineEnsemble:
    """Unpolarized nuclear-spin mixture: one sensor per m_I, shared fields.

    ``weights`` are the occupation probabilities of m_I = (-1, 0, +1); the
    default is the unpolarized uniform mixture.
    """

    base: SensorParams
    weights: tuple[float, float, float] = UNIFORM_WEIGHTS

    def __post_init__(self) -> None:
        if len(self.weights) != 3:
            raise ParameterError("weights must have one entry per m_I in (-1, 0, +1)")
        if any(w < 0.0 for w in self.weights):
            raise ParameterError(f"weights must be non-negative, got {self.weights!r}")
        total = sum(self.weights)
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ParameterError(f"weights must sum to 1, got sum = {total!r}")

    def members(self) -> Iterator[tuple[float, SensorParams]]:
        for m_i, weight in zip(NUCLEAR_PROJECTIONS, self.weights):
            yield weight, replace(self.base, nuclear_projection=m_i)


def transition_frequency(
    static_field: float, nuclear_projection: int, constants: PhysicalConstants
) -> float:
    """Spin transition angular frequency D - gamma_e*B0 + m_I*A (rad/s)."""
    if nuclear_projection not in NUCLEAR_PROJECTIONS:
        raise ParameterError(
            f"nuclear_projection must be one of {NUCLEAR_PROJECTIONS}, "
            f"got {nuclear_projection!r}"
        )
    return (
        constants.zero_field_splitting
        - constants.gyromagnetic_ratio * static_field
        + nuclear_projection * constants.hyperfine_coupling
    )


def derive_rates(params: SensorParams, constants: PhysicalConstants) -> DerivedRates:
    """T1 = 1/gamma1, T2 = 1/(gamma2 + gamma1/2), s = gamma_e^2 B1^2 T1 T2,
    and the rotating-frame detuning for this sensor's m_I."""
    if not params.gamma1 > 0.0:
        raise ParameterError(f"gamma1 must be positive, got {params.gamma1!r}")
    t1 = 1.0 / params.gamma1
    t2 = 1.0 / (params.gamma2 + 0.5 * params.gamma1)
    saturation = (constants.gyromagnetic_ratio * params.drive_amplitude) ** 2 * t1 * t2
    omega_e = transition_frequency(params.static_field, params.nuclear_projection, constants)
    detuning = omega_e - params.microwave_frequency
    rates = DerivedRates(t1=t1, t2=t2, saturation=saturation, detuning=detuning)
    for name, value in (("t1", t1), ("t2", t2), ("s", saturation), ("detuning", detuning)):
        if not math.isfinite(value):
            raise ParameterError(f"derived rate {name} is not finite: {value!r}")
    return rates


def optimal_detuning(rates: DerivedRates) -> float:
    """Detuning sqrt(1+s) / (sqrt(3) T2) that maximizes |dP0/db|."""
    if not rates.t2 > 0.0:
        raise ParameterError(f"t2 must be positive, got {rates.t2!r}")
    return math.sqrt(1.0 + rates.saturation) / (math.sqrt(3.0) * rates.t2)


def microwave_frequency_for_detuning(
    detuning: float,
    static_field: float,
    nuclear_projection: int,
    constants: PhysicalConstants,
) -> float:
    """Drive angular frequency that realizes a given detuning for one m_I."""
    return transition_frequency(static_field, nuclear_projection, constants) - detuning


def gamma2_for_t2(t2_target: float, gamma1: float) -> float:
    """Dephasing rate that realizes a target T2 given the pumping rate.

    1/T2 = gamma2 + gamma1/2, so gamma2 = 1/T2 - gamma1/2, clamped at zero
    when the pumping alone already dephases faster than the target.
    """
    if t2_target <= 0.0:
        raise ParameterError(f"t2_target must be positive, got {t2_target!r}")
    return max(1.0 / t2_target - 0.5 * gamma1, 0.0)
