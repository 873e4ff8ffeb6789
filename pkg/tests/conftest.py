from __future__ import annotations

import math

import pytest

from steadymag.model import (
    PhysicalConstants,
    SensorParams,
    derive_rates,
    microwave_frequency_for_detuning,
)


@pytest.fixture(scope="session")
def constants() -> PhysicalConstants:
    return PhysicalConstants()


def params_for(
    constants: PhysicalConstants,
    gamma1: float = 1e6,
    gamma2: float = 4.5e6,
    saturation: float = 2.0,
    detuning: float | None = None,
    nuclear_projection: int = 0,
) -> SensorParams:
    """Sensor at a given saturation; detuning defaults to the optimum."""
    t1 = 1.0 / gamma1
    t2 = 1.0 / (gamma2 + 0.5 * gamma1)
    b1 = math.sqrt(saturation / (t1 * t2)) / abs(constants.gyromagnetic_ratio)
    if detuning is None:
        detuning = math.sqrt(1.0 + saturation) / (math.sqrt(3.0) * t2)
    return SensorParams(
        static_field=0.0,
        drive_amplitude=b1,
        microwave_frequency=microwave_frequency_for_detuning(
            detuning, 0.0, nuclear_projection, constants
        ),
        gamma1=gamma1,
        gamma2=gamma2,
        nuclear_projection=nuclear_projection,
    )


@pytest.fixture()
def sensing_params(constants):
    """Default sensing operating point: T2 = 200 ns, s = 2, optimal detuning."""
    return params_for(constants)


@pytest.fixture()
def sensing_rates(sensing_params, constants):
    return derive_rates(sensing_params, constants)
