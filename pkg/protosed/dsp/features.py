"""
STFT -> mel power -> (PCEN, MFCC) feature stacking.

All spectral math runs in float64; the stacked FeatureMap is float32 with
channel 0 = PCEN and channel 1 = MFCC, laid out [2, frames, n_mels].
"""

from functools import lru_cache
from typing import List, Optional

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import fft, signal

from protosed.core.config import FeatureConfig
from protosed.core.errors import DimensionError, InputError
from protosed.dsp.audio import AudioClip, pad_to_min

PCEN_CHANNEL = 0
MFCC_CHANNEL = 1


class MelSpectrogram(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator("values")
    @classmethod
    def _non_negative(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim != 2:
            raise ValueError(f"mel spectrogram must be [frames, n_mels], got {value.shape}")
        if np.any(value < 0):
            raise ValueError("mel energies must be non-negative")
        return value

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


class FeatureMap(BaseModel):
    """Stacked [PCEN, MFCC] representation of one clip"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator("values")
    @classmethod
    def _two_channels(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim != 3 or value.shape[0] != 2:
            raise ValueError(f"feature map must be [2, frames, bins], got {value.shape}")
        return value

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def bins(self) -> int:
        return self.values.shape[2]


class FeatureStats(BaseModel):
    """Per-channel corpus mean/std used to standardize feature maps"""

    mean: List[float]
    std: List[float]

    def apply(self, values: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.mean, dtype=np.float64)[:, None, None]
        std = np.maximum(np.asarray(self.std, dtype=np.float64), 1e-8)[:, None, None]
        return ((values - mean) / std).astype(np.float32)


class FeatureStatsAccumulator:
    """Streaming per-channel sums over a training corpus"""

    def __init__(self, channels: int = 2):
        self._sum = np.zeros(channels)
        self._sum_sq = np.zeros(channels)
        self._count = 0

    def add(self, values: np.ndarray):
        flat = values.reshape(values.shape[0], -1).astype(np.float64)
        self._sum += flat.sum(axis=1)
        self._sum_sq += (flat * flat).sum(axis=1)
        self._count += flat.shape[1]

    def finalize(self) -> FeatureStats:
        if self._count == 0:
            return FeatureStats(mean=[0.0] * len(self._sum), std=[1.0] * len(self._sum))
        mean = self._sum / self._count
        var = np.maximum(self._sum_sq / self._count - mean * mean, 0.0)
        return FeatureStats(mean=mean.tolist(), std=np.sqrt(var).tolist())


@lru_cache(maxsize=8)
def hann_window(window_len: int) -> np.ndarray:
    window = signal.get_window("hann", window_len, fftbins=True)
    window.setflags(write=False)
    return window


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: Optional[float]) -> np.ndarray:
    """Triangular (Slaney-normalized) filters, [n_mels, n_fft//2 + 1]"""
    bank = librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=fmin,
        fmax=fmax if fmax is not None else sample_rate / 2,
        dtype=np.float64,
    )
    bank.setflags(write=False)
    return bank


def frame_count(n_samples: int, window_len: int = 1024, hop: int = 256) -> int:
    return 1 + (n_samples - window_len) // hop if n_samples >= window_len else 0


def stft(clip: AudioClip, window_len: int = 1024, hop: int = 256) -> np.ndarray:
    """
    One-sided Hann-windowed STFT, [frames, window_len//2 + 1] complex.

    Frame t covers samples [t*hop, t*hop + window_len); no centering.
    """
    samples = clip.samples.astype(np.float64)
    if len(samples) < window_len:
        raise InputError(
            f"clip has {len(samples)} samples, shorter than one {window_len}-sample window"
        )
    frames = sliding_window_view(samples, window_len)[::hop] * hann_window(window_len)
    return fft.rfft(frames, axis=-1)


def mel_power(
    spec: np.ndarray,
    sample_rate: int = 22050,
    n_mels: int = 128,
    fmin: float = 0.0,
    fmax: Optional[float] = None,
    window_len: int = 1024,
) -> MelSpectrogram:
    """Power spectrum projected through the mel filterbank of a `window_len`-point FFT"""
    n_bins = spec.shape[-1]
    bank = mel_filterbank(sample_rate, window_len, n_mels, fmin, fmax)
    if bank.shape[1] != n_bins:
        raise DimensionError(f"spectrogram has {n_bins} bins, filterbank expects {bank.shape[1]}")
    power = np.abs(spec) ** 2
    return MelSpectrogram(values=power @ bank.T)


def mfcc(mel: MelSpectrogram, log_floor: float = 1e-10) -> np.ndarray:
    """Orthonormal DCT-II of log mel energies, keeping every coefficient"""
    return fft.dct(np.log(mel.values + log_floor), type=2, norm="ortho", axis=-1)


def pcen(
    mel: MelSpectrogram,
    s: float = 0.025,
    alpha: float = 0.98,
    delta: float = 2.0,
    r: float = 0.5,
    eps: float = 1e-6,
) -> np.ndarray:
    """
    Per-channel energy normalization.

    M[t] = (1 - s) M[t-1] + s E[t] with M[0] = E[0];
    out = (E / (eps + M)^alpha + delta)^r - delta^r
    """
    energy = mel.values.astype(np.float64)
    if energy.shape[0] == 0:
        return energy.copy()
    smoother, _ = signal.lfilter([s], [1.0, s - 1.0], energy, axis=0, zi=((1.0 - s) * energy[:1]))
    return (energy / (eps + smoother) ** alpha + delta) ** r - delta ** r


def stack_features(
    clip: AudioClip,
    config: Optional[FeatureConfig] = None,
    stats: Optional[FeatureStats] = None,
) -> FeatureMap:
    """
    Compute the [PCEN, MFCC] feature map of a clip.

    Clips shorter than `min_duration` are zero-padded first. When `stats` is
    given each channel is standardized with the corpus mean/std.
    """
    config = config or FeatureConfig()
    if clip.sample_rate_hz != config.sample_rate:
        raise InputError(f"clip sampled at {clip.sample_rate_hz} Hz, features expect {config.sample_rate} Hz")

    clip = pad_to_min(clip, config.min_duration)
    spec = stft(clip, config.window_len, config.hop)
    mel = mel_power(spec, config.sample_rate, config.n_mels, config.fmin, config.fmax, config.window_len)

    values = np.stack(
        [
            pcen(mel, config.pcen_s, config.pcen_alpha, config.pcen_delta, config.pcen_r, config.pcen_eps),
            mfcc(mel, config.log_floor),
        ]
    ).astype(np.float32)
    if stats is not None:
        values = stats.apply(values)
    return FeatureMap(values=values)
