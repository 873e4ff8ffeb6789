from __future__ import annotations

import math

import numpy as np
import pytest

from steadymag.dynamics import quasi_static_limit
from steadymag.errors import (
    NonlinearResponseError,
    ParameterError,
    SweepRangeError,
)
from steadymag.experiments import (
    bandwidth_sweep,
    chain_trace,
    ensemble_slope,
    estimate_dynamic_range,
    estimate_sensitivity,
    make_setup,
    response_curve,
    scaling_campaign,
)
from steadymag.model import TWO_PI, PhysicalConstants
from steadymag.photophysics import NoiseModel

QUIET = NoiseModel()


def _hyperfine_setup(constants=None):
    """Triplet-resolving operating point used for response-curve work."""
    constants = constants or PhysicalConstants()
    return make_setup(
        gamma1=1e6,
        gamma2=5e5,
        saturation=2.0,
        detuning=1.5 * abs(constants.hyperfine_coupling),
        constants=constants,
    )


def test_make_setup_round_trip() -> None:
    setup = make_setup(gamma1=1e6, gamma2=4.5e6, saturation=2.0)
    rates = setup.rates()
    assert rates.saturation == pytest.approx(2.0, rel=1e-12)
    expected_opt = math.sqrt(3.0) / (math.sqrt(3.0) * rates.t2)
    assert rates.detuning == pytest.approx(expected_opt, rel=1e-12)


def test_make_setup_argument_validation() -> None:
    with pytest.raises(ParameterError):
        make_setup(gamma1=1e6, gamma2=1e6)
    with pytest.raises(ParameterError):
        make_setup(gamma1=1e6, gamma2=1e6, saturation=1.0, drive_amplitude=1e-5)
    with pytest.raises(ParameterError):
        make_setup(gamma1=1e6, gamma2=1e6, detuning="best", saturation=1.0)


def test_response_curve_linear_slope_matches_first_order() -> None:
    setup = _hyperfine_setup()
    fields = np.geomspace(1e-9, 3e-8, 8)
    curve = response_curve(setup, 100.0, fields)
    slopes = curve.v1_amplitude / curve.field_amplitudes
    predicted = abs(ensemble_slope(setup))
    assert np.allclose(slopes, predicted, rtol=0.01)


def test_response_curve_degenerate_hyperfine_single_peak() -> None:
    constants = PhysicalConstants(hyperfine_coupling=0.0)
    setup = make_setup(
        gamma1=1e6, gamma2=5e5, saturation=2.0,
        detuning=1.5 * TWO_PI * 2.16e6, constants=constants,
    )
    fields = np.geomspace(1e-6, 5e-4, 240)
    curve = response_curve(setup, 100.0, fields)
    v = curve.v1_amplitude
    interior = np.nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))[0]
    assert interior.size == 1


def test_response_curve_trajectory_cross_validates_quasistatic() -> None:
    setup = _hyperfine_setup()
    limit = quasi_static_limit(setup.rates())
    f_ac = 0.4 * limit
    fields = np.array([2e-8, 2e-7])
    qs = response_curve(setup, f_ac, fields, mode="quasistatic")
    tr = response_curve(setup, f_ac, fields, mode="trajectory")
    assert np.allclose(tr.v1_amplitude, qs.v1_amplitude, rtol=0.02)


def test_response_curve_mode_validation() -> None:
    setup = _hyperfine_setup()
    limit = quasi_static_limit(setup.rates())
    with pytest.raises(ParameterError):
        response_curve(setup, 2.0 * limit, [1e-8], mode="quasistatic")
    with pytest.raises(ParameterError):
        response_curve(setup, 100.0, [1e-8], mode="fourier")


def test_bandwidth_invariant_under_field_rescale() -> None:
    freqs = np.geomspace(1e4, 3e6, 9)
    common = dict(gamma2=4.5e6, saturation=2.0, frequencies=freqs)
    a = bandwidth_sweep([2.0], 5e5, field_amplitude=1e-6, **common)[0]
    b = bandwidth_sweep([2.0], 5e5, field_amplitude=5e-7, **common)[0]
    assert b.bandwidth == pytest.approx(a.bandwidth, rel=0.02)


def test_bandwidth_curves_ordering_and_monotonicity() -> None:
    freqs = np.geomspace(3e3, 1e7, 11)
    results = bandwidth_sweep(
        [0.2, 2.0], 5e5, gamma2=4.5e6, saturation=2.0,
        frequencies=freqs, field_amplitude=1e-6,
    )
    low, high = results
    assert high.bandwidth > low.bandwidth
    for res in results:
        amp = res.normalized_amplitude
        assert amp[0] == 1.0  # normalization anchor at the first grid point
        assert np.all(np.diff(amp) < 1e-6)
    # stronger pumping keeps the normalized response higher at every frequency
    assert np.all(high.normalized_amplitude >= low.normalized_amplitude - 1e-6)


def test_bandwidth_kappa_calibration_anchor() -> None:
    # the power-to-pumping constant is a calibration input: fit it so that
    # 1.8 W gives a 146 kHz bandwidth, then the power trend must still rise
    from scipy.optimize import brentq

    freqs = np.geomspace(1e4, 3e6, 11)
    target = 146e3

    def bandwidth_at(kappa):
        return bandwidth_sweep(
            [1.8], kappa, gamma2=4.5e6, saturation=2.0,
            frequencies=freqs, field_amplitude=1e-6,
        )[0].bandwidth

    kappa_star = brentq(lambda k: bandwidth_at(k) - target, 1.2e5, 5e5, xtol=2e3)
    results = bandwidth_sweep(
        [0.45, 0.9, 1.8, 3.6], kappa_star, gamma2=4.5e6, saturation=2.0,
        frequencies=freqs, field_amplitude=1e-6,
    )
    bandwidths = [r.bandwidth for r in results]
    assert bandwidths[2] == pytest.approx(target, rel=0.02)
    assert all(b2 > b1 for b1, b2 in zip(bandwidths, bandwidths[1:]))


def test_bandwidth_grid_must_bracket_crossing() -> None:
    freqs = np.geomspace(1e3, 1e4, 4)  # entirely below the ~3e5 Hz knee
    with pytest.raises(SweepRangeError):
        bandwidth_sweep(
            [2.0], 5e5, gamma2=4.5e6, saturation=2.0,
            frequencies=freqs, field_amplitude=1e-6,
        )


def test_bandwidth_rejects_nonlinear_field() -> None:
    freqs = np.geomspace(1e4, 1e6, 5)
    with pytest.raises(ParameterError, match="linear"):
        bandwidth_sweep(
            [2.0], 5e5, gamma2=4.5e6, saturation=2.0,
            frequencies=freqs, field_amplitude=1e-4,
        )


def test_sensitivity_noiseless_floor_is_zero() -> None:
    # FFT roundoff leaves a floor many orders below any physical field
    setup = _hyperfine_setup()
    result = estimate_sensitivity(setup, 2000.0, QUIET)
    assert result.noise_floor < 1e-15
    assert result.b_min < 1e-15
    assert result.slope > 0.0


def test_sensitivity_rejects_nonlinear_grid() -> None:
    setup = _hyperfine_setup()
    with pytest.raises(NonlinearResponseError):
        estimate_sensitivity(
            setup, 2000.0, QUIET, linear_fields=np.geomspace(1e-6, 2e-4, 10)
        )


def test_sensitivity_reproducible_across_seeds() -> None:
    setup = _hyperfine_setup()
    k = abs(ensemble_slope(setup))
    noise = NoiseModel(v1_noise_density=k * 1e-9, seed=5)
    values = [
        estimate_sensitivity(setup, 2000.0, noise, seed_index=i).sensitivity
        for i in range(20)
    ]
    values = np.asarray(values)
    assert values.std(ddof=1) / values.mean() <= 0.10
    # same seed index reproduces exactly
    again = estimate_sensitivity(setup, 2000.0, noise, seed_index=0).sensitivity
    assert again == values[0]


def test_dynamic_range_noise_decomposition() -> None:
    # 10x the noise costs exactly 20 dB; the saturation peak is unchanged
    setup = _hyperfine_setup()
    k = abs(ensemble_slope(setup))
    noise_1 = NoiseModel(v1_noise_density=k * 1e-9, seed=9)
    noise_10 = NoiseModel(v1_noise_density=10.0 * k * 1e-9, seed=9)
    r1 = estimate_dynamic_range(setup, 2000.0, noise_1)
    r10 = estimate_dynamic_range(setup, 2000.0, noise_10)
    assert r10.b_max == r1.b_max
    assert r1.dynamic_range_db - r10.dynamic_range_db == pytest.approx(20.0, abs=1e-9)


def test_dynamic_range_degenerate_hyperfine_completes() -> None:
    constants = PhysicalConstants(hyperfine_coupling=0.0)
    setup = make_setup(
        gamma1=1e6, gamma2=5e5, saturation=2.0,
        detuning=1.5 * TWO_PI * 2.16e6, constants=constants,
    )
    noise = NoiseModel(v1_noise_density=1e-7, seed=2)
    result = estimate_dynamic_range(setup, 2000.0, noise)
    assert len(result.peak_fields) == 1
    assert result.dynamic_range_db > 0.0


def test_dynamic_range_grid_too_short() -> None:
    setup = _hyperfine_setup()
    with pytest.raises(SweepRangeError):
        estimate_dynamic_range(
            setup, 2000.0, QUIET, response_fields=np.geomspace(1e-8, 1e-5, 40)
        )


def test_chain_trace_rejects_fast_signal() -> None:
    setup = _hyperfine_setup()
    limit = quasi_static_limit(setup.rates())
    with pytest.raises(ParameterError, match="quasi-static"):
        chain_trace(setup, 5.0 * limit, 1e-7, 1.0, 8.0 * 5.0 * limit, QUIET)


def test_scaling_campaign_smoke() -> None:
    setup = make_setup(gamma1=1e6, gamma2=4.5e6, saturation=2.0)
    noise = NoiseModel(v1_noise_density=2e-5, seed=3)
    report = scaling_campaign(
        setup,
        noise=noise,
        resolution_durations=(10.0, 100.0, 1000.0),
        precision_durations=(10.0, 30.0, 100.0),
        n_seeds=8,
    )
    assert report.resolution_slope == pytest.approx(-1.0, abs=0.05)
    assert report.precision_slope is not None
    assert report.precision_slope == pytest.approx(-1.5, abs=0.4)
    assert len(report.fwhm_time_products) == 3
    assert all(report.recovered)
