"""Long-term acoustic front-end.

Converts binaural waveforms into per-frame spectral features: magnitude STFT
over long analysis windows (512 ms every 171 ms by default), followed by a
filterbank projection -- either a constant-Q wavelet-style bank ("scalogram",
290 bins) or a Mel triangle bank ("fbank", 256 bins) -- with log compression.
Stereo input is mapped to average/difference channels first, so each frame is
a 2 x n_bins matrix.

All operations here are pure functions of their arguments and safe to call
from parallel workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from .errors import InvalidConfig, InvalidInput

SCALOGRAM_BINS = 290
FBANK_BINS = 256
DEFAULT_LOG_FLOOR = 1e-10
DEFAULT_WAVELET_FMIN_HZ = 50.0

_WINDOW_FNS = ("hann", "rect")


@dataclass
class Waveform:
    """Multi-channel audio snippet; samples shaped (channels, n_samples)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise InvalidInput(f"samples must be 2-D (channels, n), got shape {self.samples.shape}")
        if self.samples.shape[0] not in (1, 2):
            raise InvalidInput(f"expected 1 or 2 channels, got {self.samples.shape[0]}")
        if int(self.sample_rate) <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class StftConfig:
    """Analysis parameters for the magnitude STFT."""

    sample_rate: int = 16000
    window_ms: float = 512.0
    hop_ms: float = 171.0
    window_fn: str = "hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        if self.window_ms < self.hop_ms:
            raise InvalidConfig(f"window_ms ({self.window_ms}) must be >= hop_ms ({self.hop_ms})")
        if self.window_fn not in _WINDOW_FNS:
            raise InvalidConfig(f"window_fn must be one of {_WINDOW_FNS}, got {self.window_fn!r}")
        if self.window_samples <= 0 or self.hop_samples <= 0:
            raise InvalidConfig("window and hop must each span at least one sample")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def n_fft_bins(self) -> int:
        return self.window_samples // 2 + 1

    def window(self) -> np.ndarray:
        n = self.window_samples
        if self.window_fn == "rect":
            return np.ones(n)
        # periodic Hann
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass
class FilterBank:
    """Bank of nonnegative spectral filters, one row per output bin."""

    kind: str
    weights: np.ndarray
    center_freqs: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.center_freqs = np.asarray(self.center_freqs, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.center_freqs.shape[0]:
            raise InvalidInput("weights must be (n_bins, n_fft_bins) with one center per row")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise InvalidInput("filter weights must be finite and nonnegative")
        if not np.all(self.weights.max(axis=1) > 0):
            raise InvalidInput("every filter row needs at least one positive entry")
        if np.any(np.diff(self.center_freqs) <= 0):
            raise InvalidInput("center frequencies must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return self.weights.shape[0]

    @property
    def n_fft_bins(self) -> int:
        return self.weights.shape[1]


@dataclass
class FeatureMatrix:
    """One acoustic frame: 2 x n_bins (average row, difference row)."""

    data: np.ndarray
    clip_id: str
    frame_index: int
    frame_center_time: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise InvalidInput(f"feature frame must be 2 x n_bins, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("feature frame contains non-finite entries")

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Resample to target_rate with a polyphase windowed-sinc filter.

    Uses a Kaiser-windowed sinc low-pass (scipy's polyphase resampler) with
    cutoff at the smaller of the two Nyquist frequencies.  Identical rates
    return the samples unchanged bit-for-bit; otherwise the duration is
    preserved to within one output sample period.
    """
    if w.n_samples == 0:
        raise InvalidInput("cannot resample an empty waveform")
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise InvalidInput(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), target_rate)
    g = math.gcd(w.sample_rate, target_rate)
    up, down = target_rate // g, w.sample_rate // g
    out = resample_poly(w.samples, up, down, axis=1)
    return Waveform(out, target_rate)


def to_avg_diff(w: Waveform) -> Waveform:
    """Map stereo (L, R) to ((L+R)/2, (L-R)/2); invertible via sum/difference."""
    if w.channels != 2:
        raise InvalidInput(f"average/difference mapping needs 2 channels, got {w.channels}")
    left, right = w.samples[0], w.samples[1]
    out = np.stack([(left + right) / 2.0, (left - right) / 2.0])
    return Waveform(out, w.sample_rate)


def stft_magnitude(ch: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Magnitude STFT of a single channel.

    Frames the signal without padding, so the frame count is
    floor((n - window) / hop) + 1.  Returns (n_frames, window // 2 + 1).
    """
    ch = np.asarray(ch, dtype=np.float64)
    if ch.ndim != 1:
        raise InvalidInput(f"expected a 1-D channel, got shape {ch.shape}")
    win_n, hop_n = cfg.window_samples, cfg.hop_samples
    if ch.shape[0] < win_n:
        raise InvalidInput(
            f"clip of {ch.shape[0]} samples is shorter than one {win_n}-sample window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(ch, win_n)[::hop_n]
    return np.abs(np.fft.rfft(frames * cfg.window(), axis=1))


def n_stft_frames(n_samples: int, cfg: StftConfig) -> int:
    """Frame count produced by stft_magnitude for a clip of n_samples."""
    return (n_samples - cfg.window_samples) // cfg.hop_samples + 1


def frame_center_time(frame_index: int, cfg: StftConfig) -> float:
    """Center of analysis window for a frame, in seconds from clip start."""
    return (frame_index * cfg.hop_samples + cfg.window_samples / 2.0) / cfg.sample_rate


def mel_of_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_of_mel(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(n_bins: int, n_fft_bins: int, sample_rate: int) -> FilterBank:
    """Triangular filters with centers equally spaced on the Mel scale.

    Edge points run from 0 Hz to Nyquist; filter b rises over
    [point_b, point_{b+1}] and falls over [point_{b+1}, point_{b+2}].
    """
    if n_bins >= n_fft_bins:
        raise InvalidConfig(f"need n_fft_bins ({n_fft_bins}) > n_bins ({n_bins})")
    if n_bins < 1:
        raise InvalidConfig(f"n_bins must be >= 1, got {n_bins}")
    nyquist = sample_rate / 2.0
    points_hz = hz_of_mel(np.linspace(0.0, float(mel_of_hz(nyquist)), n_bins + 2))
    fft_freqs = np.arange(n_fft_bins) * nyquist / (n_fft_bins - 1)

    lo = points_hz[:-2, None]
    center = points_hz[1:-1, None]
    hi = points_hz[2:, None]
    f = fft_freqs[None, :]
    rising = (f - lo) / (center - lo)
    falling = (hi - f) / (hi - center)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    return FilterBank("mel", weights, points_hz[1:-1])


def build_wavelet_filterbank(
    n_bins: int,
    n_fft_bins: int,
    sample_rate: int,
    f_min: float = DEFAULT_WAVELET_FMIN_HZ,
) -> FilterBank:
    """Constant-Q bank of Gaussian-in-log-frequency filters.

    Centers are geometrically spaced from f_min to Nyquist, so the quality
    factor is constant across bins.  The Gaussian width is set so adjacent
    filters cross at half peak; every row is normalized to unit peak.
    """
    if n_bins >= n_fft_bins:
        raise InvalidConfig(f"need n_fft_bins ({n_fft_bins}) > n_bins ({n_bins})")
    if n_bins < 1:
        raise InvalidConfig(f"n_bins must be >= 1, got {n_bins}")
    nyquist = sample_rate / 2.0
    if not 0 < f_min < nyquist:
        raise InvalidConfig(f"f_min must lie in (0, Nyquist), got {f_min}")

    span = math.log(nyquist / f_min)
    if n_bins == 1:
        centers = np.array([math.sqrt(f_min * nyquist)])
        sigma = span / 4.0
    else:
        centers = f_min * np.exp(span * np.arange(n_bins) / (n_bins - 1))
        # adjacent filters meet at half peak: exp(-(d/2)^2 / (2 s^2)) = 1/2
        log_step = span / (n_bins - 1)
        sigma = log_step / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    fft_freqs = np.arange(n_fft_bins) * nyquist / (n_fft_bins - 1)
    weights = np.zeros((n_bins, n_fft_bins))
    log_f = np.log(fft_freqs[1:])
    z = (log_f[None, :] - np.log(centers)[:, None]) / sigma
    weights[:, 1:] = np.exp(-0.5 * z * z)
    weights /= weights.max(axis=1, keepdims=True)
    return FilterBank("wavelet", weights, centers)


def apply_filterbank(spec: np.ndarray, fb: FilterBank, log_floor: float = DEFAULT_LOG_FLOOR) -> np.ndarray:
    """Project a magnitude spectrogram through fb and log-compress.

    out[t, b] = ln(max(sum_k fb[b, k] * spec[t, k], log_floor)).
    """
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 2 or spec.shape[1] != fb.n_fft_bins:
        raise InvalidInput(
            f"spectrogram has {spec.shape[-1] if spec.ndim else 0} columns, filterbank expects {fb.n_fft_bins}"
        )
    if log_floor <= 0:
        raise InvalidConfig(f"log_floor must be positive, got {log_floor}")
    return np.log(np.maximum(spec @ fb.weights.T, log_floor))


@dataclass
class FrontendConfig:
    """Full front-end: STFT plus filterbank choice."""

    kind: str = "scalogram"
    stft: StftConfig = field(default_factory=StftConfig)
    n_bins: int | None = None
    log_floor: float = DEFAULT_LOG_FLOOR
    wavelet_f_min: float = DEFAULT_WAVELET_FMIN_HZ

    def __post_init__(self):
        if self.kind not in ("scalogram", "fbank"):
            raise InvalidConfig(f"feature kind must be 'scalogram' or 'fbank', got {self.kind!r}")
        if self.n_bins is None:
            self.n_bins = SCALOGRAM_BINS if self.kind == "scalogram" else FBANK_BINS
        if self.log_floor <= 0:
            raise InvalidConfig(f"log_floor must be positive, got {self.log_floor}")

    def build_filterbank(self) -> FilterBank:
        if self.kind == "scalogram":
            return build_wavelet_filterbank(
                self.n_bins, self.stft.n_fft_bins, self.stft.sample_rate, self.wavelet_f_min
            )
        return build_mel_filterbank(self.n_bins, self.stft.n_fft_bins, self.stft.sample_rate)


def extract_features(
    clip: Waveform,
    kind: str = "scalogram",
    cfg: StftConfig | None = None,
    *,
    clip_id: str = "",
    n_bins: int | None = None,
    log_floor: float = DEFAULT_LOG_FLOOR,
    wavelet_f_min: float = DEFAULT_WAVELET_FMIN_HZ,
    filterbank: FilterBank | None = None,
) -> list[FeatureMatrix]:
    """Run the full front-end on one clip.

    Resamples to the configured rate if needed, maps stereo to
    average/difference channels (mono clips are duplicated, with a warning),
    then per channel computes the magnitude STFT and the log filterbank
    projection.  Returns one 2 x n_bins FeatureMatrix per analysis frame.

    A prebuilt ``filterbank`` may be passed to amortize construction across
    clips; it must match the STFT bin count.
    """
    frontend = FrontendConfig(
        kind=kind,
        stft=cfg if cfg is not None else StftConfig(),
        n_bins=n_bins,
        log_floor=log_floor,
        wavelet_f_min=wavelet_f_min,
    )
    stft_cfg = frontend.stft
    if clip.sample_rate != stft_cfg.sample_rate:
        clip = resample(clip, stft_cfg.sample_rate)
    if clip.channels == 1:
        warnings.warn(f"clip {clip_id or '<unnamed>'} is mono; duplicating channel", stacklevel=2)
        clip = Waveform(np.vstack([clip.samples, clip.samples]), clip.sample_rate)
    avg_diff = to_avg_diff(clip)

    fb = filterbank if filterbank is not None else frontend.build_filterbank()
    if fb.n_fft_bins != stft_cfg.n_fft_bins:
        raise InvalidInput(
            f"filterbank expects {fb.n_fft_bins} FFT bins but STFT yields {stft_cfg.n_fft_bins}"
        )
    rows = [
        apply_filterbank(stft_magnitude(avg_diff.samples[c], stft_cfg), fb, frontend.log_floor)
        for c in range(2)
    ]
    stacked = np.stack(rows, axis=1)  # (n_frames, 2, n_bins)
    return [
        FeatureMatrix(
            data=stacked[t],
            clip_id=clip_id,
            frame_index=t,
            frame_center_time=frame_center_time(t, stft_cfg),
        )
        for t in range(stacked.shape[0])
    ]
