"""Desk-scale simulator of a dissipative steady-state two-level magnetometer.

The package follows the measurement chain of the instrument it models:
``model`` holds constants and operating-point parameters, ``dynamics`` the
driven-dissipative spin physics, ``photophysics`` the photodiode voltages,
``lockin`` and ``spectro`` the demodulation and spectral estimation, and
``experiments`` the end-to-end virtual experiments. ``cli`` exposes all of
it as subcommands.
"""

from .model import (
    DerivedRates,
    DriveField,
    HyperfineEnsemble,
    PhysicalConstants,
    SensorParams,
    derive_rates,
    gamma2_for_t2,
    optimal_detuning,
    transition_frequency,
)
from .dynamics import (
    LinearResponse,
    Liouvillian,
    SpinState,
    Trajectory,
    build_liouvillian,
    ensemble_p0,
    hamiltonian,
    integrate_trajectory,
    linear_response,
    p0_linear,
    p0_of_state,
    steady_state_analytic,
    steady_state_numeric,
)
from .photophysics import (
    NoiseModel,
    TimeTrace,
    VoltageModel,
    drift_correct,
    gamma1_from_power,
    synthesize_voltages,
)
from .lockin import DemodOutput, LockinConfig, demodulate, scope, settled_amplitude
from .spectro import (
    PeakFit,
    Spectrum,
    ToneConfig,
    fit_peak,
    power_spectrum,
    precision_vs_time,
    resolution_vs_time,
)
from .experiments import (
    BandwidthResult,
    DynamicRangeResult,
    ResponseCurve,
    SensitivityResult,
    SensorSetup,
    bandwidth_sweep,
    estimate_dynamic_range,
    estimate_sensitivity,
    make_setup,
    response_curve,
    scaling_campaign,
)

__version__ = "0.1.0"
