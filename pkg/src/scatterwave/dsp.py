"""Windows, STFT, Mel filter bank and Mel spectrogram.

Frames are centered: frame ``t`` covers ``[t*hop - n_fft/2, t*hop + n_fft/2)``
of the reflect-padded signal, so a signal of ``K`` samples yields
``K // hop + 1`` frames.  Everything is computed in float64.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DegenerateInputError, InputError, ParameterError
from .features import BandAxis, FeatureImage

log = logging.getLogger(__name__)


class WindowKind(enum.Enum):
    HANN = "hann"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class WindowSpec:
    kind: WindowKind = WindowKind.HANN
    length: int = 1024
    amplitude: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind(self.kind))
        if int(self.length) != self.length or self.length < 1:
            raise ParameterError(f"window length must be a positive integer, got {self.length}")
        if not self.amplitude > 0:
            raise ParameterError(f"window amplitude must be positive, got {self.amplitude}")
        if self.kind is WindowKind.GAUSSIAN and not self.sigma > 0:
            raise ParameterError(f"gaussian window needs sigma > 0, got {self.sigma}")


def make_window(spec: WindowSpec) -> np.ndarray:
    """Sample a Hann or Gaussian window on ``spec.length`` points.

    Hann: ``a * cos(pi t / T)**2`` with ``t`` spanning ``[-T/2, T/2]`` so both
    end points are zero.  Gaussian: ``a * exp(-t**2 / (2 sigma**2))`` with
    ``t`` in samples, centered on the middle of the window.
    """
    n = spec.length
    t = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    if spec.kind is WindowKind.HANN:
        if n == 1:
            return np.array([spec.amplitude])
        support = float(n - 1)
        w = spec.amplitude * np.cos(np.pi * t / support) ** 2
        w[np.abs(t) >= support / 2] = 0.0
        return w
    return spec.amplitude * np.exp(-(t**2) / (2.0 * spec.sigma**2))


@dataclass
class ComplexSpectrogram:
    data: np.ndarray  # [freq_bins, frames]
    hop: int
    sample_rate: float
    n_fft: int

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def frame_count(n_samples: int, hop: int) -> int:
    return n_samples // hop + 1


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    if x.size == 1:
        return np.pad(x, pad, mode="edge")
    return np.pad(x, pad, mode="reflect")


def frames(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Centered, reflect-padded frames as a read-only ``[frames, n_fft]`` view."""
    padded = _reflect_pad(np.asarray(x, dtype=np.float64), n_fft // 2)
    count = frame_count(len(x), hop)
    need = (count - 1) * hop + n_fft
    if padded.size < need:  # odd n_fft: zero-extend the tail
        padded = np.pad(padded, (0, need - padded.size))
    view = np.lib.stride_tricks.sliding_window_view(padded, n_fft)
    return view[: (count - 1) * hop + 1 : hop]


def stft(x, window: np.ndarray, n_fft: int, hop: int, sample_rate: float = 1.0) -> ComplexSpectrogram:
    x = np.asarray(x, dtype=np.float64)
    window = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("stft needs a non-empty 1-D signal")
    if n_fft < 1 or hop < 1:
        raise ParameterError("n_fft and hop must be positive")
    if window.size > n_fft:
        raise ParameterError(f"window length {window.size} exceeds n_fft {n_fft}")
    if window.size < n_fft:
        lpad = (n_fft - window.size) // 2
        window = np.pad(window, (lpad, n_fft - window.size - lpad))
    spec = scipy.fft.rfft(frames(x, n_fft, hop) * window, axis=1)
    return ComplexSpectrogram(np.ascontiguousarray(spec.T), hop, sample_rate, n_fft)


def power_spectrogram(S: ComplexSpectrogram) -> FeatureImage:
    power = S.data.real**2 + S.data.imag**2
    return FeatureImage(power, BandAxis.FREQUENCY_BINS, time_step_s=S.hop / S.sample_rate)


def hz_to_mel(f_hz):
    f = np.asarray(f_hz, dtype=np.float64)
    if np.any(f < 0):
        raise ParameterError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ParameterError("mel value must be non-negative")
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MelFilterBank:
    filters: np.ndarray  # [n_mels, n_fft // 2 + 1]
    center_freqs_hz: np.ndarray  # n_mels + 2 edges, first and last are f_min / f_max
    n_fft: int
    sample_rate: float

    @property
    def n_mels(self) -> int:
        return self.filters.shape[0]


def build_mel_filter_bank(n_mels: int, n_fft: int, sample_rate: float,
                          f_min: float = 0.0, f_max: float | None = None) -> MelFilterBank:
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_mels < 1 or n_fft < 1:
        raise ParameterError("n_mels and n_fft must be positive")
    if not (0.0 <= f_min < f_max <= sample_rate / 2.0):
        raise ParameterError(
            f"need 0 <= f_min < f_max <= sample_rate/2, got f_min={f_min}, f_max={f_max}, sr={sample_rate}"
        )
    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    edges = mel_to_hz(mels)
    edges[0], edges[-1] = f_min, f_max
    bins = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)

    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = 1.0 - (bins - mid) / (hi - mid)
    filters = np.where(bins <= mid, rising, falling)
    filters[(bins < lo) | (bins > hi)] = 0.0
    np.clip(filters, 0.0, 1.0, out=filters)

    empty = np.flatnonzero(filters.max(axis=1) == 0)
    if empty.size:
        log.warning("%d mel filters fall between FFT bins and are empty: %s", empty.size, empty.tolist())
    filters.setflags(write=False)
    edges.setflags(write=False)
    return MelFilterBank(filters, edges, n_fft, float(sample_rate))


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 1024
    hop: int = 200
    n_mels: int = 64
    f_min: float = 0.0
    f_max: float | None = None
    window: WindowSpec | None = None  # defaults to Hann(n_fft, a=1)

    def window_array(self) -> np.ndarray:
        spec = self.window or WindowSpec(WindowKind.HANN, self.n_fft, 1.0)
        return make_window(spec)


_BANK_CACHE: dict[tuple, MelFilterBank] = {}


def _cached_bank(n_mels, n_fft, sr, f_min, f_max) -> MelFilterBank:
    key = (n_mels, n_fft, float(sr), float(f_min), None if f_max is None else float(f_max))
    bank = _BANK_CACHE.get(key)
    if bank is None:
        bank = _BANK_CACHE[key] = build_mel_filter_bank(n_mels, n_fft, sr, f_min, f_max)
    return bank


def mel_spectrogram(x, sample_rate: float, cfg: MelConfig = MelConfig()) -> FeatureImage:
    """Mel power spectrogram, shape ``[n_mels, frames]``."""
    S = stft(x, cfg.window_array(), cfg.n_fft, cfg.hop, sample_rate)
    bank = _cached_bank(cfg.n_mels, cfg.n_fft, sample_rate, cfg.f_min, cfg.f_max)
    power = power_spectrogram(S).data
    mel = bank.filters @ power
    labels = [float(f) for f in bank.center_freqs_hz[1:-1]]
    return FeatureImage(mel, BandAxis.MEL_BINS, labels, cfg.hop / sample_rate)


def median_normalize(img: FeatureImage) -> FeatureImage:
    """Divide every entry by the median of the image.

    For an even number of entries the median is the mean of the two middle
    values (numpy's convention).
    """
    med = float(np.median(img.data))
    if not med > 0:
        raise DegenerateInputError(f"median is {med}; cannot normalize a feature image with non-positive median")
    return img.with_data(img.data / med)
