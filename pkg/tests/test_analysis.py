import numpy as np
import pytest

from chaos_anneal.analysis import (Spectrum, find_fundamental,
                                   intensity_spectrum, relative_std,
                                   sideband_suppression_ratio,
                                   split_window_spectra)
from chaos_anneal.errors import AnalysisError


def make_series(n=1024, dt=0.05):
    return np.arange(n) * dt


class TestIntensitySpectrum:
    def test_constant_series_is_pure_dc(self):
        t = make_series()
        spec = intensity_spectrum(t, np.full_like(t, 3.7))
        s = spec.normalized
        dc = np.argmin(np.abs(spec.frequencies))
        assert s[dc] == 1.0
        rest = np.delete(s, dc)
        assert rest.max() < 1e-12

    def test_cosine_on_grid_gives_two_lines(self):
        t = make_series(n=2048, dt=0.05)
        # place the tone exactly on a DFT bin: w0 = 2 pi m / (n dt)
        w0 = 2 * np.pi * 32 / (2048 * 0.05)
        spec = intensity_spectrum(t, np.cos(w0 * t))
        s = spec.normalized
        peaks = np.abs(np.abs(spec.frequencies) - w0) < 1e-9
        assert s[peaks].min() > 0.999
        assert s[~peaks].max() < 1e-10

    def test_two_tone_amplitude_ratio(self):
        t = make_series(n=4096, dt=0.02)
        w0 = 2 * np.pi * 64 / (4096 * 0.02)
        series = np.cos(w0 * t) + 0.01 * np.cos(2 * w0 * t)
        spec = intensity_spectrum(t, series)
        s = spec.normalized
        i1 = np.argmin(np.abs(spec.frequencies - w0))
        i2 = np.argmin(np.abs(spec.frequencies - 2 * w0))
        assert s[i2] / s[i1] == pytest.approx(0.01, rel=1e-6)

    def test_parseval_identity(self, rng):
        t = make_series(n=999, dt=0.013)
        series = rng.standard_normal(len(t))
        spec = intensity_spectrum(t, series)
        dw = spec.frequencies[1] - spec.frequencies[0]
        lhs = np.sum(spec.magnitude ** 2) * dw
        rhs = np.pi * np.sum(series ** 2) * 0.013
        assert lhs == pytest.approx(rhs, rel=1e-6)

    def test_normalized_scale_invariance(self, rng):
        t = make_series()
        series = rng.standard_normal(len(t)) + 5.0
        s1 = intensity_spectrum(t, series).normalized
        s2 = intensity_spectrum(t, 17.3 * series).normalized
        assert s1 == pytest.approx(s2, rel=1e-12)

    def test_window_selects_samples(self):
        t = make_series()
        spec = intensity_spectrum(t, np.ones_like(t), window=(10.0, 20.0))
        assert spec.window[0] >= 10.0 - 1e-9
        assert spec.window[1] <= 20.0 + 1e-9

    def test_rejects_nonuniform_sampling(self):
        t = np.array([0.0, 0.1, 0.25, 0.3])
        with pytest.raises(AnalysisError):
            intensity_spectrum(t, np.ones_like(t))

    def test_rejects_window_outside_span(self):
        t = make_series()
        with pytest.raises(AnalysisError):
            intensity_spectrum(t, np.ones_like(t), window=(-5.0, 10.0))


class TestSuppressionRatio:
    def _line_spectrum(self, amps, n=2000, dt=0.05):
        t = np.arange(n) * dt
        w0 = 2 * np.pi * 32 / (n * dt)  # exactly on the DFT grid
        series = sum(a * np.cos(k * w0 * t) for k, a in enumerate(amps, 1))
        return intensity_spectrum(t, series + 10.0)

    def test_identical_spectra_give_unity(self):
        spec = self._line_spectrum([1.0, 0.3, 0.1])
        assert sideband_suppression_ratio(spec, spec) == pytest.approx(1.0)

    def test_clean_test_spectrum_gives_zero(self):
        ref = self._line_spectrum([1.0, 0.3, 0.1])
        test = self._line_spectrum([1.0])
        ratio = sideband_suppression_ratio(ref, test)
        assert ratio < 1e-8

    def test_invariant_under_renormalization(self):
        ref = self._line_spectrum([1.0, 0.3])
        test = self._line_spectrum([1.0, 0.03])
        r1 = sideband_suppression_ratio(ref, test)
        ref2 = Spectrum(ref.frequencies, 7.7 * ref.magnitude, ref.window)
        test2 = Spectrum(test.frequencies, 0.3 * test.magnitude, test.window)
        assert sideband_suppression_ratio(ref2, test2) == pytest.approx(r1,
                                                                        rel=1e-12)

    def test_partial_suppression_value(self):
        ref = self._line_spectrum([1.0, 0.2])
        test = self._line_spectrum([1.0, 0.02])
        assert sideband_suppression_ratio(ref, test) == pytest.approx(0.1,
                                                                      rel=1e-2)

    def test_requires_matching_grids(self):
        ref = self._line_spectrum([1.0, 0.3])
        test = self._line_spectrum([1.0, 0.3], n=1000)
        with pytest.raises(AnalysisError):
            sideband_suppression_ratio(ref, test)

    def test_no_fundamental_raises(self):
        t = make_series()
        flat = intensity_spectrum(t, np.zeros_like(t))
        with pytest.raises(AnalysisError):
            find_fundamental(flat)


class TestSplitWindows:
    def test_periodic_halves_match(self):
        t = np.arange(1000) * 0.05
        base = np.sin(2 * np.pi * np.arange(500) / 125.0)
        series = np.concatenate([base, base])
        first, second = split_window_spectra(t, series, t[500])
        assert first.magnitude == pytest.approx(second.magnitude, abs=1e-12)

    def test_structured_second_half(self):
        rng = np.random.default_rng(3)
        t = np.arange(1000) * 0.05
        w0 = 2 * np.pi * 25 / (500 * 0.05)
        series = np.concatenate([rng.standard_normal(500),
                                 np.cos(w0 * t[:500])])
        first, second = split_window_spectra(t, series, t[500])
        peak2 = second.normalized[np.abs(second.frequencies) > 0.1].max()
        assert peak2 > 0.45  # line spectrum in the second half
        assert second.normalized.max() == 1.0

    def test_rejects_midpoint_outside(self):
        t = make_series()
        with pytest.raises(AnalysisError):
            split_window_spectra(t, np.ones_like(t), t[-1] + 1.0)

    def test_rejects_degenerate_window(self):
        t = make_series()
        with pytest.raises(AnalysisError):
            split_window_spectra(t, np.ones_like(t), t[0] + 1e-6)


class TestRelativeStd:
    def test_constant_series(self):
        assert relative_std(np.full(10, 4.0)) == 0.0

    def test_known_value(self):
        vals = np.array([1.0, 3.0])
        assert relative_std(vals) == pytest.approx(0.5)

    def test_zero_mean_rejected(self):
        with pytest.raises(AnalysisError):
            relative_std(np.array([-1.0, 1.0]))
