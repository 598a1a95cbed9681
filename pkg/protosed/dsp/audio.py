from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator

from protosed.core.errors import InputError


class AudioClip(BaseModel):
    """Mono samples in [-1, 1] at a fixed sample rate"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray
    sample_rate_hz: int = 22050

    @field_validator("samples", mode="before")
    @classmethod
    def _as_mono_float(cls, value):
        array = np.asarray(value, dtype=np.float32)
        if array.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {array.shape}")
        if array.size == 0:
            raise ValueError("audio clip is empty")
        return array

    @field_validator("sample_rate_hz")
    @classmethod
    def _positive_rate(cls, value: int) -> int:
        if value <= 0:
            raise ValueError(f"sample rate must be positive, got {value}")
        return value

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


def resample_linear(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Linear-interpolation resampler"""
    if source_rate == target_rate:
        return samples
    duration = len(samples) / source_rate
    n_target = max(1, int(round(duration * target_rate)))
    source_times = np.arange(len(samples)) / source_rate
    target_times = np.arange(n_target) / target_rate
    return np.interp(target_times, source_times, samples).astype(np.float32)


def read_wav(
    path: Union[str, Path],
    expected_rate: int = 22050,
    resample: bool = False,
) -> AudioClip:
    """
    Read a PCM16 / float32 WAV file as a mono clip

    Args:
        path: WAV file
        expected_rate: required sample rate
        resample: linearly resample other rates instead of rejecting them

    Returns:
        AudioClip at `expected_rate`, stereo downmixed by averaging
    """
    try:
        data, rate = sf.read(str(path), dtype="float32", always_2d=True)
    except (RuntimeError, sf.LibsndfileError) as e:
        raise InputError(f"cannot read WAV {path}: {e}") from e

    samples = data.mean(axis=1)
    if rate != expected_rate:
        if not resample:
            raise InputError(
                f"{path} is sampled at {rate} Hz, expected {expected_rate} Hz (use --resample)"
            )
        logger.debug(f"Resampling {path} from {rate} Hz to {expected_rate} Hz")
        samples = resample_linear(samples, rate, expected_rate)

    try:
        return AudioClip(samples=samples, sample_rate_hz=expected_rate)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from e


def write_wav(path: Union[str, Path], clip: AudioClip, subtype: str = "PCM_16"):
    sf.write(str(path), clip.samples, clip.sample_rate_hz, subtype=subtype)


def pad_to_min(clip: AudioClip, min_dur: float = 0.2) -> AudioClip:
    """Right-pad with zeros to exactly `min_dur` seconds; longer clips pass through"""
    target = int(round(min_dur * clip.sample_rate_hz))
    if len(clip.samples) >= target:
        return clip
    padded = np.zeros(target, dtype=np.float32)
    padded[: len(clip.samples)] = clip.samples
    return AudioClip(samples=padded, sample_rate_hz=clip.sample_rate_hz)
