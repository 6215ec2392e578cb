import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterwave import dsp
from scatterwave.errors import DegenerateInputError, InputError, ParameterError
from scatterwave.features import BandAxis, FeatureImage


def naive_stft(x, window, n_fft, hop):
    """Direct O(N^2) DFT of centered, reflect-padded frames."""
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = len(x) // hop + 1
    out = np.zeros((n_fft // 2 + 1, n_frames), dtype=complex)
    for t in range(n_frames):
        seg = xp[t * hop:t * hop + n_fft] * window
        for k in range(n_fft // 2 + 1):
            out[k, t] = sum(seg[n] * complex(math.cos(2 * math.pi * k * n / n_fft),
                                             -math.sin(2 * math.pi * k * n / n_fft))
                            for n in range(n_fft))
    return out


def direct_mel_bank(n_mels, n_fft, sr, f_min=0.0, f_max=None):
    f_max = sr / 2 if f_max is None else f_max
    to_mel = lambda f: 2595.0 * math.log10(1 + f / 700.0)
    to_hz = lambda m: 700.0 * (10 ** (m / 2595.0) - 1)
    lo_m, hi_m = to_mel(f_min), to_mel(f_max)
    edges = [to_hz(lo_m + i * (hi_m - lo_m) / (n_mels + 1)) for i in range(n_mels + 2)]
    edges[0], edges[-1] = f_min, f_max
    out = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        a, b, c = edges[m], edges[m + 1], edges[m + 2]
        for k in range(n_fft // 2 + 1):
            f = k * sr / n_fft
            if a <= f <= b:
                out[m, k] = (f - a) / (b - a)
            elif b < f <= c:
                out[m, k] = (c - f) / (c - b)
    return out


class TestWindows:
    def test_hann_endpoints_and_peak(self):
        w = dsp.make_window(dsp.WindowSpec("hann", 9, 2.0))
        assert w[0] == 0.0 and w[-1] == 0.0
        assert w[4] == pytest.approx(2.0)
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)

    def test_hann_matches_cosine_squared(self):
        n = 64
        t = np.arange(n) - (n - 1) / 2
        expected = np.cos(np.pi * t / (n - 1)) ** 2
        np.testing.assert_allclose(dsp.make_window(dsp.WindowSpec("hann", n)), expected, atol=1e-15)

    def test_gaussian(self):
        w = dsp.make_window(dsp.WindowSpec("gaussian", 11, 1.0, sigma=2.0))
        assert w[5] == 1.0
        assert w[7] == pytest.approx(math.exp(-4 / 8))

    @pytest.mark.parametrize("kwargs", [
        dict(kind="hann", length=0), dict(kind="hann", length=8, amplitude=0.0),
        dict(kind="gaussian", length=8, sigma=0.0),
    ])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ParameterError):
            dsp.WindowSpec(**kwargs)


class TestSTFT:
    def test_frame_count_for_reference_length(self):
        assert dsp.frame_count(8000, 200) == 41

    def test_against_naive_dft(self, rng):
        x = rng.standard_normal(150)
        w = dsp.make_window(dsp.WindowSpec("hann", 32))
        got = dsp.stft(x, w, 32, 8).data
        ref = naive_stft(x, w, 32, 8)
        assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-9

    def test_short_window_is_centered(self, rng):
        x = rng.standard_normal(64)
        w = dsp.make_window(dsp.WindowSpec("hann", 16))
        padded = np.pad(w, 8)
        np.testing.assert_allclose(dsp.stft(x, w, 32, 4).data, dsp.stft(x, padded, 32, 4).data)

    def test_dc_signal_concentrates_in_bin_zero(self):
        S = dsp.stft(np.ones(256), np.ones(32), 32, 16)
        assert np.allclose(S.data[0], 32.0)
        assert np.allclose(S.data[1:], 0.0, atol=1e-12)

    def test_errors(self):
        with pytest.raises(InputError):
            dsp.stft(np.zeros((2, 2)), np.ones(4), 4, 1)
        with pytest.raises(ParameterError):
            dsp.stft(np.ones(10), np.ones(8), 4, 1)

    @given(st.integers(1, 300), st.integers(1, 64))
    def test_frame_count_property(self, n, hop):
        x = np.arange(n, dtype=float) + 1
        S = dsp.stft(x, np.ones(16), 16, hop)
        assert S.n_frames == n // hop + 1

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, a, b):
        r = np.random.default_rng(0)
        x, y = r.standard_normal((2, 100))
        w = dsp.make_window(dsp.WindowSpec("hann", 16))
        lhs = dsp.stft(a * x + b * y, w, 16, 5).data
        rhs = a * dsp.stft(x, w, 16, 5).data + b * dsp.stft(y, w, 16, 5).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_power_is_squared_magnitude(self, rng):
        S = dsp.stft(rng.standard_normal(128), np.hanning(32), 32, 8)
        P = dsp.power_spectrogram(S)
        assert P.band_axis is BandAxis.FREQUENCY_BINS
        np.testing.assert_allclose(P.data, np.abs(S.data) ** 2)


class TestMelScale:
    def test_reference_value(self):
        assert dsp.hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), rel=1e-15)

    def test_roundtrip(self):
        f = np.geomspace(1.0, 96000.0, 2000)
        back = dsp.mel_to_hz(dsp.hz_to_mel(f))
        assert np.max(np.abs(back - f) / f) < 1e-9

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            dsp.hz_to_mel(-1.0)
        with pytest.raises(ParameterError):
            dsp.mel_to_hz(np.array([1.0, -2.0]))

    @given(st.floats(0, 1e5), st.floats(0, 1e5))
    def test_monotone(self, a, b):
        if a < b:
            assert dsp.hz_to_mel(a) < dsp.hz_to_mel(b)


class TestMelBank:
    @pytest.mark.parametrize("n_mels,n_fft,sr", [(64, 1024, 47600.0), (10, 256, 8000.0), (40, 512, 22050.0)])
    def test_matches_direct_evaluation(self, n_mels, n_fft, sr):
        bank = dsp.build_mel_filter_bank(n_mels, n_fft, sr)
        assert np.max(np.abs(bank.filters - direct_mel_bank(n_mels, n_fft, sr))) < 1e-12

    def test_shapes_and_range(self):
        bank = dsp.build_mel_filter_bank(64, 1024, 47600.0)
        assert bank.filters.shape == (64, 513)
        assert bank.center_freqs_hz.shape == (66,)
        assert bank.filters.min() >= 0 and bank.filters.max() <= 1
        assert not bank.filters.flags.writeable

    def test_band_limits(self):
        with pytest.raises(ParameterError):
            dsp.build_mel_filter_bank(10, 256, 8000.0, f_max=5000.0)
        with pytest.raises(ParameterError):
            dsp.build_mel_filter_bank(10, 256, 8000.0, f_min=3000.0, f_max=2000.0)

    def test_empty_filters_warn(self, caplog):
        dsp.build_mel_filter_bank(128, 64, 8000.0)
        assert "empty" in caplog.text


class TestMelSpectrogram:
    def test_reference_shape(self, rng):
        img = dsp.mel_spectrogram(rng.standard_normal(8000), 47600.0)
        assert img.shape == (64, 41)
        assert img.band_axis is BandAxis.MEL_BINS
        assert len(img.band_labels) == 64

    def test_tone_lands_in_matching_filter(self):
        sr = 16000.0
        t = np.arange(4000) / sr
        img = dsp.mel_spectrogram(np.sin(2 * np.pi * 2000 * t), sr, dsp.MelConfig(n_fft=512, hop=128, n_mels=40))
        peak = int(np.argmax(img.data[:, 10]))
        assert abs(img.band_labels[peak] - 2000) < 200

    def test_median_normalize(self, rng):
        img = FeatureImage(rng.uniform(1, 5, (6, 7)))
        assert np.median(dsp.median_normalize(img).data) == pytest.approx(1.0)

    def test_median_normalize_degenerate(self):
        with pytest.raises(DegenerateInputError):
            dsp.median_normalize(FeatureImage(np.zeros((3, 3))))
