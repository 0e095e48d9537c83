"""Front-end tests: resampling, channel mapping, STFT, filterbanks, features."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avjoint.dsp import (
    FeatureMatrix,
    FilterBank,
    StftConfig,
    Waveform,
    apply_filterbank,
    build_mel_filterbank,
    build_wavelet_filterbank,
    extract_features,
    hz_of_mel,
    mel_of_hz,
    n_stft_frames,
    resample,
    stft_magnitude,
    to_avg_diff,
)
from avjoint.errors import InvalidConfig, InvalidInput


def naive_dft_magnitude(frame):
    """O(N^2) real-input DFT magnitude, independent of np.fft."""
    n = frame.shape[0]
    k = np.arange(n // 2 + 1)
    phases = np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)
    return np.abs(phases @ frame.astype(np.complex128))


def stereo_clip(seconds=10.0, rate=16000, seed=0):
    rng = np.random.default_rng(seed)
    n = int(seconds * rate)
    return Waveform(rng.uniform(-0.5, 0.5, size=(2, n)), rate)


class TestResample:
    def test_same_rate_is_identity(self):
        w = stereo_clip(seconds=0.25)
        out = resample(w, 16000)
        assert out.sample_rate == 16000
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_length_scales_with_rate_ratio(self):
        w = stereo_clip(seconds=10.0, rate=16000)
        assert w.n_samples == 160000
        out = resample(w, 48000)
        assert abs(out.n_samples - 480000) <= 1

    def test_sine_peak_survives_downsampling(self):
        rate_in, rate_out = 48000, 16000
        t = np.arange(rate_in) / rate_in
        sine = 0.8 * np.sin(2 * np.pi * 440.0 * t)
        out = resample(Waveform(np.stack([sine, sine]), rate_in), rate_out)
        chunk = out.samples[0][:4096]
        mags = naive_dft_magnitude(chunk)
        expected_bin = round(440.0 * 4096 / rate_out)
        assert np.argmax(mags) == expected_bin

    def test_empty_waveform_rejected(self):
        w = Waveform(np.zeros((2, 0)), 16000)
        with pytest.raises(InvalidInput):
            resample(w, 8000)

    def test_bad_target_rate_rejected(self):
        with pytest.raises(InvalidInput):
            resample(stereo_clip(seconds=0.01), 0)


class TestAvgDiff:
    def test_identical_channels_zero_difference(self):
        x = np.linspace(-1, 1, 64)
        out = to_avg_diff(Waveform(np.stack([x, x]), 16000))
        np.testing.assert_array_equal(out.samples[0], x)
        np.testing.assert_array_equal(out.samples[1], np.zeros_like(x))

    def test_direct_arithmetic(self):
        w = Waveform(np.array([[1.0, 0.0], [0.0, 1.0]]), 16000)
        out = to_avg_diff(w)
        np.testing.assert_array_equal(out.samples[0], [0.5, 0.5])
        np.testing.assert_array_equal(out.samples[1], [0.5, -0.5])

    def test_round_trip_exact_on_pcm_values(self):
        # 16-bit PCM-derived doubles are dyadic, so sums/differences are
        # exact and the linear bijection inverts bit-for-bit.
        rng = np.random.default_rng(7)
        pcm = rng.integers(-32768, 32768, size=(2, 1024))
        w = Waveform(pcm / 32768.0, 16000)
        out = to_avg_diff(w)
        left = out.samples[0] + out.samples[1]
        right = out.samples[0] - out.samples[1]
        np.testing.assert_array_equal(left, w.samples[0])
        np.testing.assert_array_equal(right, w.samples[1])

    def test_mono_rejected(self):
        with pytest.raises(InvalidInput):
            to_avg_diff(Waveform(np.zeros((1, 10)), 16000))


class TestStft:
    def test_zero_signal_gives_zero_matrix(self):
        cfg = StftConfig()
        out = stft_magnitude(np.zeros(20000), cfg)
        assert out.shape == (n_stft_frames(20000, cfg), cfg.n_fft_bins)
        np.testing.assert_array_equal(out, np.zeros_like(out))

    def test_ten_second_clip_yields_56_frames(self):
        cfg = StftConfig()
        assert cfg.window_samples == 8192
        assert cfg.hop_samples == 2736
        out = stft_magnitude(np.ones(160000), cfg)
        assert out.shape[0] == 56

    def test_bin_centered_sine_peaks_at_its_bin(self):
        cfg = StftConfig(sample_rate=16000, window_ms=64.0, hop_ms=32.0, window_fn="rect")
        n_win = cfg.window_samples
        k = 97
        freq = k * cfg.sample_rate / n_win
        t = np.arange(8 * n_win) / cfg.sample_rate
        out = stft_magnitude(np.sin(2 * np.pi * freq * t), cfg)
        assert np.all(np.argmax(out, axis=1) == k)

    @pytest.mark.parametrize("window_fn", ["hann", "rect"])
    def test_matches_naive_dft(self, window_fn):
        cfg = StftConfig(sample_rate=16000, window_ms=64.0, hop_ms=32.0, window_fn=window_fn)
        assert cfg.window_samples == 1024
        rng = np.random.default_rng(11)
        win = cfg.window()
        for trial in range(10):
            sig = rng.standard_normal(1024)
            got = stft_magnitude(sig, cfg)
            assert got.shape == (1, 513)
            expected = naive_dft_magnitude(sig * win)
            np.testing.assert_allclose(got[0], expected, rtol=1e-9, atol=1e-12)

    def test_short_clip_rejected(self):
        with pytest.raises(InvalidInput):
            stft_magnitude(np.zeros(100), StftConfig())

    @given(
        n_extra=st.integers(min_value=0, max_value=30000),
        hop_ms=st.sampled_from([64.0, 128.0, 171.0, 512.0]),
    )
    @settings(max_examples=40, deadline=None)
    def test_frame_count_formula(self, n_extra, hop_ms):
        cfg = StftConfig(hop_ms=hop_ms)
        n = cfg.window_samples + n_extra
        out = stft_magnitude(np.zeros(n), cfg)
        assert out.shape[0] == (n - cfg.window_samples) // cfg.hop_samples + 1


class TestMelFilterbank:
    def test_single_bin_peaks_at_mid_mel(self):
        fb = build_mel_filterbank(1, 257, 16000)
        mid_hz = float(hz_of_mel(mel_of_hz(8000.0) / 2.0))
        assert fb.center_freqs[0] == pytest.approx(mid_hz, rel=1e-12)
        fft_freqs = np.arange(257) * 8000.0 / 256
        peak_freq = fft_freqs[np.argmax(fb.weights[0])]
        assert abs(peak_freq - mid_hz) <= 8000.0 / 256

    def test_four_bins_match_mel_formula(self):
        fb = build_mel_filterbank(4, 257, 16000)
        points = hz_of_mel(np.linspace(0.0, float(mel_of_hz(8000.0)), 6))
        np.testing.assert_allclose(fb.center_freqs, points[1:-1], rtol=1e-12)
        assert np.all(np.diff(fb.center_freqs) > 0)
        assert np.all(fb.weights.sum(axis=1) > 0)

    def test_coverage_between_first_and_last_center(self):
        fb = build_mel_filterbank(256, 4097, 16000)
        fft_freqs = np.arange(4097) * 8000.0 / 4096
        inside = (fft_freqs >= fb.center_freqs[0]) & (fft_freqs <= fb.center_freqs[-1])
        assert np.all(fb.weights[:, inside].sum(axis=0) > 0)

    def test_too_few_fft_bins_rejected(self):
        with pytest.raises(InvalidConfig):
            build_mel_filterbank(256, 256, 16000)


class TestWaveletFilterbank:
    def test_single_bin_unit_peak(self):
        fb = build_wavelet_filterbank(1, 257, 16000)
        assert fb.weights[0].max() == pytest.approx(1.0)
        assert np.all(fb.weights >= 0)

    def test_centers_geometrically_spaced(self):
        fb = build_wavelet_filterbank(290, 4097, 16000)
        assert fb.n_bins == 290
        ratios = fb.center_freqs[1:] / fb.center_freqs[:-1]
        assert np.all(np.diff(fb.center_freqs) > 0)
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
        assert fb.center_freqs[0] == pytest.approx(50.0)
        assert fb.center_freqs[-1] == pytest.approx(8000.0)

    def test_white_noise_scalogram_has_no_dead_bins(self):
        cfg = StftConfig()
        rng = np.random.default_rng(3)
        sig = rng.standard_normal(cfg.window_samples + 99 * cfg.hop_samples + 1)
        spec = stft_magnitude(sig, cfg)
        assert spec.shape[0] == 100
        fb = build_wavelet_filterbank(290, cfg.n_fft_bins, 16000)
        energies = spec @ fb.weights.T
        assert np.all(energies > 0)


class TestApplyFilterbank:
    def identity_bank(self, n):
        return FilterBank("mel", np.eye(n), np.arange(1.0, n + 1.0))

    def test_zero_spectrogram_hits_log_floor(self):
        fb = self.identity_bank(5)
        out = apply_filterbank(np.zeros((3, 5)), fb, log_floor=1e-10)
        np.testing.assert_array_equal(out, np.full((3, 5), math.log(1e-10)))

    def test_identity_bank_reduces_to_log(self):
        fb = self.identity_bank(4)
        spec = np.abs(np.random.default_rng(0).standard_normal((6, 4))) + 0.5
        out = apply_filterbank(spec, fb, log_floor=1e-10)
        np.testing.assert_allclose(out, np.log(spec), rtol=1e-14)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        spec = np.abs(rng.standard_normal((3, 5)))
        weights = np.abs(rng.standard_normal((2, 5)))
        fb = FilterBank("mel", weights, np.array([100.0, 200.0]))
        floor = 1e-10
        expected = np.empty((3, 2))
        for t in range(3):
            for b in range(2):
                acc = 0.0
                for k in range(5):
                    acc += weights[b, k] * spec[t, k]
                expected[t, b] = math.log(max(acc, floor))
        got = apply_filterbank(spec, fb, log_floor=floor)
        np.testing.assert_allclose(got, expected, atol=1e-12, rtol=0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            apply_filterbank(np.zeros((3, 6)), self.identity_bank(5))

    def test_monotone_under_scaling(self):
        rng = np.random.default_rng(9)
        spec = np.abs(rng.standard_normal((4, 8)))
        weights = np.abs(rng.standard_normal((3, 8)))
        fb = FilterBank("mel", weights, np.array([10.0, 20.0, 30.0]))
        base = apply_filterbank(spec, fb)
        for c in (1.5, 3.0, 10.0):
            assert np.all(apply_filterbank(c * spec, fb) >= base)


class TestExtractFeatures:
    def test_scalogram_shape_and_count(self):
        frames = extract_features(stereo_clip(), kind="scalogram", clip_id="clip0")
        assert len(frames) == 56
        assert all(f.data.shape == (2, 290) for f in frames)
        assert frames[0].frame_center_time == pytest.approx(0.256)
        assert frames[55].frame_center_time == pytest.approx(9.661)

    def test_fbank_shape(self):
        frames = extract_features(stereo_clip(), kind="fbank")
        assert len(frames) == 56
        assert all(f.data.shape == (2, 256) for f in frames)

    def test_identical_channels_floor_difference_row(self):
        x = np.random.default_rng(2).uniform(-0.5, 0.5, size=160000)
        clip = Waveform(np.stack([x, x]), 16000)
        frames = extract_features(clip, kind="fbank", log_floor=1e-10)
        floor_row = np.float32(math.log(1e-10))
        for f in frames:
            np.testing.assert_array_equal(f.data[1], np.full(256, floor_row))

    def test_deterministic(self):
        clip = stereo_clip(seconds=3.0, seed=4)
        a = extract_features(clip, kind="scalogram")
        b = extract_features(clip, kind="scalogram")
        for fa, fb_ in zip(a, b):
            np.testing.assert_array_equal(fa.data, fb_.data)

    def test_mono_clip_duplicated_with_warning(self):
        mono = Waveform(np.random.default_rng(1).uniform(-0.1, 0.1, (1, 160000)), 16000)
        with pytest.warns(UserWarning):
            frames = extract_features(mono, kind="fbank", log_floor=1e-10)
        floor_row = np.float32(math.log(1e-10))
        np.testing.assert_array_equal(frames[0].data[1], np.full(256, floor_row))

    def test_feature_matrix_validation(self):
        with pytest.raises(InvalidInput):
            FeatureMatrix(np.zeros((3, 4)), "c", 0, 0.0)
        with pytest.raises(InvalidInput):
            FeatureMatrix(np.full((2, 4), np.nan), "c", 0, 0.0)
