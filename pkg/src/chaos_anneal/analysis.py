"""Spectral diagnostics for intensity time series.

The spectrum magnitude is S(w) = | dt / sqrt(2) * sum_k f(t_k) e^(-i w t_k) |
on the discrete frequency grid of the window; no taper is applied by
default (an optional Hann taper exists for exploration but is off for
every quantitative comparison).  Frequencies are reported in units of
the mechanical frequency.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AnalysisError

_REL_TOL = 1e-9


@dataclass
class Spectrum:
    """Two-sided magnitude spectrum of a uniformly sampled series."""

    frequencies: np.ndarray
    magnitude: np.ndarray
    window: tuple

    @property
    def normalized(self):
        """S' = S / max(S); all ones test equals 1 at the peak."""
        peak = self.magnitude.max()
        if peak == 0.0:
            return np.zeros_like(self.magnitude)
        return self.magnitude / peak


def _uniform_dt(times):
    diffs = np.diff(times)
    if len(diffs) == 0:
        raise AnalysisError("need at least two samples")
    dt = diffs[0]
    if dt <= 0 or np.any(np.abs(diffs - dt) > _REL_TOL * dt):
        raise AnalysisError("series must be uniformly sampled")
    return float(dt)


def intensity_spectrum(times, values, window=None, hann=False) -> Spectrum:
    """Magnitude spectrum of ``values`` over ``window`` = (t0, t1).

    The DFT is scaled by dt / sqrt(2); with the two-sided grid this
    fixes sum(S^2) dw = pi * sum(f^2) dt (discrete Parseval identity).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise AnalysisError("times and values must have equal length")
    if window is not None:
        t0, t1 = window
        if t0 < times[0] - _REL_TOL or t1 > times[-1] + _REL_TOL or t1 <= t0:
            raise AnalysisError("window must lie within the series span")
        mask = (times >= t0 - _REL_TOL) & (times <= t1 + _REL_TOL)
        times = times[mask]
        values = values[mask]
    dt = _uniform_dt(times)
    data = values * np.hanning(len(values)) if hann else values
    spec = np.fft.fftshift(np.fft.fft(data))
    freqs = np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(len(data), d=dt))
    return Spectrum(
        frequencies=freqs,
        magnitude=(dt / np.sqrt(2.0)) * np.abs(spec),
        window=(float(times[0]), float(times[-1])))


def split_window_spectra(times, values, t_mid):
    """Spectra of [t0, t_mid) and [t_mid, t1] (transient vs attractor)."""
    times = np.asarray(times, dtype=float)
    if not times[0] < t_mid < times[-1]:
        raise AnalysisError("t_mid must lie strictly inside the series span")
    idx = int(np.searchsorted(times, t_mid))
    if idx < 2 or len(times) - idx < 2:
        raise AnalysisError("each window needs at least two samples")
    first = intensity_spectrum(times[:idx], np.asarray(values)[:idx])
    second = intensity_spectrum(times[idx:], np.asarray(values)[idx:])
    return first, second


def find_fundamental(spec: Spectrum):
    """Frequency of the largest positive-frequency, non-DC peak."""
    pos = spec.frequencies > 0.0
    if not pos.any() or spec.magnitude[pos].max() == 0.0:
        raise AnalysisError("no identifiable fundamental peak")
    freqs = spec.frequencies[pos]
    return float(freqs[np.argmax(spec.magnitude[pos])])


def harmonic_band_mask(frequencies, fundamental, band_halfwidth,
                       first_harmonic=2):
    """Mask of positive frequencies within the harmonic bands k w0, k >= 2."""
    freqs = np.asarray(frequencies)
    mask = np.zeros(freqs.shape, dtype=bool)
    k = first_harmonic
    f_max = freqs.max()
    while k * fundamental - band_halfwidth <= f_max:
        mask |= np.abs(freqs - k * fundamental) <= band_halfwidth
        k += 1
    mask &= freqs > 0.0
    return mask


def sideband_suppression_ratio(spec_ref: Spectrum, spec_test: Spectrum,
                               fundamental=None, band_halfwidth_frac=0.1):
    """Ratio of normalized harmonic-band power, test over reference.

    Bands are windows of half-width ``band_halfwidth_frac * w0`` around
    the harmonics k w0 for k >= 2; the fundamental defaults to the
    largest non-DC peak of the reference spectrum.  The DC bin never
    contributes.
    """
    if spec_ref.frequencies.shape != spec_test.frequencies.shape or np.any(
            np.abs(spec_ref.frequencies - spec_test.frequencies)
            > _REL_TOL * np.maximum(1.0, np.abs(spec_ref.frequencies))):
        raise AnalysisError("spectra must share one frequency grid")
    if fundamental is None:
        fundamental = find_fundamental(spec_ref)
    if fundamental <= 0.0:
        raise AnalysisError("fundamental frequency must be positive")
    mask = harmonic_band_mask(spec_ref.frequencies, fundamental,
                              band_halfwidth_frac * fundamental)
    if not mask.any():
        raise AnalysisError("no harmonic bands inside the frequency span")
    ref_power = spec_ref.normalized[mask].sum()
    if ref_power == 0.0:
        raise AnalysisError("reference spectrum has no harmonic content")
    return float(spec_test.normalized[mask].sum() / ref_power)


def relative_std(values):
    """Standard deviation over mean of a time series (spread diagnostic)."""
    values = np.asarray(values, dtype=float)
    mean = values.mean()
    if mean == 0.0:
        raise AnalysisError("relative spread undefined for zero-mean series")
    return float(values.std() / abs(mean))


def omega_to_hz(omega, omega_m_hz):
    """Convert a frequency in mechanical units to Hz (nu = w * nu_m)."""
    return omega * omega_m_hz
