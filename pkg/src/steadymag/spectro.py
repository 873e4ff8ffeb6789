"""Spectral estimation and peak fitting.

The single-sided amplitude spectrum is normalized so that an on-bin
sinusoid of amplitude a reads a at its bin (coherent window gain divided
out). Peak fitting uses the finite-record line shape of a steady sinusoid
(the Dirichlet kernel magnitude) with a free effective record length, so
the fitted FWHM is a measured quantity: the frequency resolution. The fit
uncertainty of the center frequency is the frequency precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import OptimizeWarning, brentq, curve_fit

from .errors import DataError, DetectionError, FitError, ParameterError
from .photophysics import TimeTrace
from .seeding import STREAM_TONE, rng_for

WINDOWS = ("rectangular", "hann")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Single-sided amplitude spectrum of a uniformly sampled record."""

    frequencies: np.ndarray
    magnitude: np.ndarray  # volts, coherent-gain corrected
    record_length: float  # seconds
    window: str
    n_samples: int
    coherent_gain: float
    window_sumsq: float

    @property
    def bin_spacing(self) -> float:
        return 1.0 / self.record_length

    def windowed_power(self) -> float:
        """Mean-square power of the windowed samples, rebuilt from magnitudes."""
        p = (self.magnitude * self.coherent_gain) ** 2
        weights = np.full(p.size, 0.5)
        weights[0] = 1.0
        if self.n_samples % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(weights * p))

    def to_csv(self) -> str:
        lines = ["frequency_hz,magnitude_V"]
        for i in range(self.frequencies.size):
            lines.append(f"{float(self.frequencies[i])!r},{float(self.magnitude[i])!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PeakFit:
    """Fitted spectral peak: position, width, amplitude, and uncertainties."""

    center: float  # Hz
    fwhm: float  # Hz
    amplitude: float  # volts
    sigma_center: float  # Hz, from the residual-scaled covariance
    sigma_fwhm: float  # Hz
    residual_norm: float  # volts

    def __post_init__(self) -> None:
        if not self.fwhm > 0.0:
            raise ParameterError(f"fwhm must be positive, got {self.fwhm!r}")
        if not self.sigma_center > 0.0:
            raise ParameterError(f"sigma_center must be positive, got {self.sigma_center!r}")

    def to_toml(self) -> str:
        return (
            "[peak]\n"
            f"center_hz = {float(self.center)!r}\n"
            f"fwhm_hz = {float(self.fwhm)!r}\n"
            f"amplitude_v = {float(self.amplitude)!r}\n"
            f"sigma_center_hz = {float(self.sigma_center)!r}\n"
            f"sigma_fwhm_hz = {float(self.sigma_fwhm)!r}\n"
            f"residual_norm_v = {float(self.residual_norm)!r}\n"
        )


def power_spectrum(trace: TimeTrace, window: str = "rectangular") -> Spectrum:
    """Single-sided amplitude spectrum of the v1 channel."""
    if window not in WINDOWS:
        raise ParameterError(f"window must be one of {WINDOWS}, got {window!r}")
    v = trace.v1
    n = v.size
    if n < 16:
        raise DataError(f"need at least 16 samples for a spectrum, got {n}")
    w = np.ones(n) if window == "rectangular" else np.hanning(n)
    cg = float(w.mean())
    raw = np.abs(np.fft.rfft(w * v))
    scale = np.full(raw.size, 2.0 / n)
    scale[0] = 1.0 / n
    if n % 2 == 0:
        scale[-1] = 1.0 / n
    return Spectrum(
        frequencies=np.fft.rfftfreq(n, d=1.0 / trace.sample_rate),
        magnitude=raw * scale / cg,
        record_length=n / trace.sample_rate,
        window=window,
        n_samples=n,
        coherent_gain=cg,
        window_sumsq=float(np.sum(w * w)),
    )


def band_noise_density(spectrum: Spectrum, f_lo: float, f_hi: float) -> float:
    """White-noise amplitude spectral density (V/sqrt(Hz)) over a band.

    Averages the periodogram over the band's bins; for a rectangular window
    this reduces to sqrt(mean(A^2) * T / 2).
    """
    mask = (spectrum.frequencies >= f_lo) & (spectrum.frequencies <= f_hi)
    mask[0] = False
    if not mask.any():
        raise ParameterError(f"band [{f_lo}, {f_hi}] Hz contains no spectrum bins")
    sum_w = spectrum.coherent_gain * spectrum.n_samples
    fs = spectrum.n_samples / spectrum.record_length
    psd = spectrum.magnitude[mask] ** 2 * sum_w**2 / (2.0 * fs * spectrum.window_sumsq)
    return float(np.sqrt(psd.mean()))


def dirichlet_magnitude(delta_f, record_length: float, n_samples: int):
    """|DFT| line shape of a steady sinusoid offset by delta_f from a bin.

    Equals |sinc(d) / sinc(d/N)| with d = delta_f * record_length; unity at
    d = 0, zeros at every other integer d.
    """
    d = np.asarray(delta_f, dtype=float) * record_length
    return np.abs(np.sinc(d) / np.sinc(d / n_samples))


@lru_cache(maxsize=None)
def _half_max_offset(n_samples: int) -> float:
    """Offset d (in units of 1/T) where the line shape crosses 1/2."""
    return brentq(
        lambda d: dirichlet_magnitude(d / 1.0, 1.0, n_samples) - 0.5, 1e-9, 0.999999
    )


def _lorentzian_magnitude(delta_f, fwhm):
    return 1.0 / (1.0 + (2.0 * np.asarray(delta_f, dtype=float) / fwhm) ** 2)


def _fractional_bin_offset(mags: np.ndarray, k: int) -> float:
    """Adjacent-bin ratio estimate of the tone's offset from bin k.

    For the rectangular-window line shape the magnitude ratio r of the
    larger neighbor to the peak gives offset r/(1+r) bins; the fit needs
    this to start inside the correct basin of the oscillatory landscape.
    """
    m_minus = mags[k - 1] if k >= 1 else 0.0
    m_plus = mags[k + 1] if k + 1 < mags.size else 0.0
    if m_plus >= m_minus:
        r = m_plus / mags[k]
        return r / (1.0 + r)
    r = m_minus / mags[k]
    return -r / (1.0 + r)


def fit_peak(
    spectrum: Spectrum,
    search_band: tuple[float, float],
    line_shape: str = "dirichlet",
    fit_halfwidth_bins: int = 8,
    dominance_ratio: float = 5.0,
) -> PeakFit:
    """Nonlinear least-squares fit of the dominant peak in a band.

    Parameters
    ----------
    spectrum : Spectrum
        Amplitude spectrum to fit.
    search_band : (f_lo, f_hi)
        Band in Hz that must contain exactly one dominant peak (magnitude at
        least ``dominance_ratio`` times the band median).
    line_shape : "dirichlet" or "lorentzian"
        "dirichlet" models a non-decaying windowed sinusoid and is the
        default; "lorentzian" suits decaying signals.
    fit_halfwidth_bins : int
        Number of bins on each side of the peak included in the fit.

    Returns the fitted center, FWHM, amplitude, and their residual-scaled
    uncertainties. Raises DetectionError when no dominant peak exists and
    FitError on non-convergence.
    """
    f_lo, f_hi = search_band
    freqs = spectrum.frequencies
    mags = spectrum.magnitude
    band = (freqs >= f_lo) & (freqs <= f_hi)
    band[0] = False
    if not band.any():
        raise ParameterError(f"search band [{f_lo}, {f_hi}] Hz contains no bins")
    band_idx = np.nonzero(band)[0]
    peak_idx = band_idx[np.argmax(mags[band_idx])]
    band_median = float(np.median(mags[band_idx]))
    if band_median > 0.0 and mags[peak_idx] < dominance_ratio * band_median:
        raise DetectionError(
            f"no dominant peak in [{f_lo}, {f_hi}] Hz: max/median = "
            f"{mags[peak_idx] / band_median:.2f} < {dominance_ratio}"
        )

    lo = max(peak_idx - fit_halfwidth_bins, 1)
    hi = min(peak_idx + fit_halfwidth_bins + 1, freqs.size)
    f_fit = freqs[lo:hi]
    m_fit = mags[lo:hi]
    t_rec = spectrum.record_length
    n = spectrum.n_samples

    if line_shape == "dirichlet":
        def model(f, amp, f0, t_eff):
            return amp * dirichlet_magnitude(f - f0, t_eff, n)

        offset = _fractional_bin_offset(mags, peak_idx)
        f_start = float(freqs[peak_idx]) + offset * spectrum.bin_spacing
        amp_start = float(mags[peak_idx]) / dirichlet_magnitude(
            offset * spectrum.bin_spacing, t_rec, n
        )
        p0 = (amp_start, f_start, t_rec)
        bounds = (
            [0.0, f_fit[0] - spectrum.bin_spacing, t_rec / 8.0],
            [np.inf, f_fit[-1] + spectrum.bin_spacing, t_rec * 8.0],
        )
    elif line_shape == "lorentzian":
        def model(f, amp, f0, w):
            return amp * _lorentzian_magnitude(f - f0, w)

        p0 = (float(mags[peak_idx]), float(freqs[peak_idx]), 2.0 / t_rec)
        bounds = (
            [0.0, f_fit[0] - spectrum.bin_spacing, spectrum.bin_spacing / 100.0],
            [np.inf, f_fit[-1] + spectrum.bin_spacing, (f_hi - f_lo) * 10.0],
        )
    else:
        raise ParameterError(f"line_shape must be 'dirichlet' or 'lorentzian', got {line_shape!r}")

    import warnings as _warnings

    try:
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(model, f_fit, m_fit, p0=p0, bounds=bounds, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(
            f"peak fit did not converge in [{f_lo}, {f_hi}] Hz "
            f"(start {p0}, {f_fit.size} points): {exc}"
        ) from exc

    amp, f0 = float(popt[0]), float(popt[1])
    if not f_lo <= f0 <= f_hi:
        raise FitError(f"fitted center {f0:.6g} Hz left the search band [{f_lo}, {f_hi}] Hz")
    if line_shape == "dirichlet":
        t_eff = float(popt[2])
        fwhm = 2.0 * _half_max_offset(n) / t_eff
        rel_sigma_width = math.sqrt(max(pcov[2, 2], 0.0)) / t_eff
    else:
        fwhm = float(popt[2])
        rel_sigma_width = math.sqrt(max(pcov[2, 2], 0.0)) / fwhm
    residual = m_fit - model(f_fit, *popt)
    tiny = np.finfo(float).tiny
    sigma_f = max(math.sqrt(max(pcov[1, 1], 0.0)), tiny)
    return PeakFit(
        center=f0,
        fwhm=fwhm,
        amplitude=amp,
        sigma_center=sigma_f,
        sigma_fwhm=max(fwhm * rel_sigma_width, tiny),
        residual_norm=float(np.linalg.norm(residual)),
    )


@dataclass(frozen=True)
class ToneConfig:
    """Synthetic test tone: a steady sinusoid plus white noise."""

    frequency: float  # Hz
    amplitude: float = 1.0  # volts
    sample_rate: float = 100.0  # Hz
    noise_density: float = 0.0  # V/sqrt(Hz)
    seed: int = 0


def synthesize_tone(
    tone: ToneConfig, duration: float, t_index: int = 0, seed_index: int = 0
) -> TimeTrace:
    n = int(round(duration * tone.sample_rate))
    t = np.arange(n) / tone.sample_rate
    v = tone.amplitude * np.cos(2.0 * math.pi * tone.frequency * t)
    if tone.noise_density > 0.0:
        sigma = tone.noise_density * math.sqrt(tone.sample_rate / 2.0)
        v = v + sigma * rng_for(tone.seed, STREAM_TONE, t_index, seed_index).standard_normal(n)
    return TimeTrace(sample_rate=tone.sample_rate, start_time=0.0, v1=v)


def loglog_slope(x, y, sigma_ln_y=None) -> tuple[float, float]:
    """Slope of ln y vs ln x with its standard error.

    When per-point uncertainties of ln y are given they act as weights;
    otherwise ordinary least squares.
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 3:
        raise ParameterError("need at least 3 points for a slope with uncertainty")
    w = None
    if sigma_ln_y is not None:
        s = np.maximum(np.asarray(sigma_ln_y, dtype=float), 1e-9)
        w = 1.0 / s
    coeffs, cov = np.polyfit(lx, ly, 1, w=w, cov=True)
    return float(coeffs[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


@dataclass(frozen=True)
class ResolutionRow:
    duration: float
    fwhm: float
    sigma_fwhm: float
    center: float
    sigma_center: float


@dataclass(frozen=True)
class PrecisionRow:
    duration: float
    sigma_center: float  # Monte Carlo scatter of the fitted center
    mean_center: float
    n_seeds: int


@dataclass(frozen=True)
class ResolutionScaling:
    rows: tuple[ResolutionRow, ...]
    slope: float
    slope_stderr: float


@dataclass(frozen=True)
class PrecisionScaling:
    rows: tuple[PrecisionRow, ...]
    slope: float | None
    slope_stderr: float | None


def _search_band(tone: ToneConfig, duration: float) -> tuple[float, float]:
    half = max(3.0 / duration, 0.3 * tone.frequency)
    half = min(half, 0.9 * tone.frequency)
    return tone.frequency - half, tone.frequency + half


def resolution_vs_time(
    tone: ToneConfig, t_list, window: str = "rectangular"
) -> ResolutionScaling:
    """Fitted FWHM for each record length, with the log-log scaling slope.

    The record lengths should span at least 1.5 decades for a meaningful
    slope.
    """
    t_list = sorted(float(t) for t in t_list)
    if math.log10(t_list[-1] / t_list[0]) < 1.5:
        raise ParameterError("record lengths must span at least 1.5 decades")
    rows = []
    for i, duration in enumerate(t_list):
        trace = synthesize_tone(tone, duration, t_index=i, seed_index=0)
        fit = fit_peak(power_spectrum(trace, window), _search_band(tone, duration))
        rows.append(
            ResolutionRow(
                duration=trace.duration,
                fwhm=fit.fwhm,
                sigma_fwhm=fit.sigma_fwhm,
                center=fit.center,
                sigma_center=fit.sigma_center,
            )
        )
    slope, stderr = loglog_slope(
        [r.duration for r in rows],
        [r.fwhm for r in rows],
        sigma_ln_y=[r.sigma_fwhm / r.fwhm for r in rows],
    )
    return ResolutionScaling(rows=tuple(rows), slope=slope, slope_stderr=stderr)


def precision_vs_time(tone: ToneConfig, t_list, n_seeds: int = 50) -> PrecisionScaling:
    """Monte Carlo scatter of the fitted center frequency per record length.

    sigma_f(T) is the across-seed standard deviation of the fitted center;
    the returned slope is its log-log scaling (None in the noiseless case,
    where the scatter is identically zero).
    """
    if n_seeds < 2:
        raise ParameterError("need at least 2 seeds for a scatter estimate")
    rows = []
    for i, duration in enumerate(sorted(float(t) for t in t_list)):
        centers = np.empty(n_seeds)
        for k in range(n_seeds):
            trace = synthesize_tone(tone, duration, t_index=i, seed_index=k)
            fit = fit_peak(power_spectrum(trace), _search_band(tone, duration))
            centers[k] = fit.center
        rows.append(
            PrecisionRow(
                duration=trace.duration,
                sigma_center=float(centers.std(ddof=1)),
                mean_center=float(centers.mean()),
                n_seeds=n_seeds,
            )
        )
    if len(rows) < 3 or any(r.sigma_center == 0.0 for r in rows):
        return PrecisionScaling(rows=tuple(rows), slope=None, slope_stderr=None)
    slope, stderr = loglog_slope(
        [r.duration for r in rows], [r.sigma_center for r in rows]
    )
    return PrecisionScaling(rows=tuple(rows), slope=slope, slope_stderr=stderr)
