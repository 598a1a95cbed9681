from protosed.dsp.audio import AudioClip, pad_to_min, read_wav, resample_linear, write_wav
from protosed.dsp.features import (
    FeatureMap,
    FeatureStats,
    FeatureStatsAccumulator,
    MelSpectrogram,
    frame_count,
    mel_power,
    mfcc,
    pcen,
    stack_features,
    stft,
)

__all__ = [
    "AudioClip",
    "FeatureMap",
    "FeatureStats",
    "FeatureStatsAccumulator",
    "MelSpectrogram",
    "frame_count",
    "mel_power",
    "mfcc",
    "pad_to_min",
    "pcen",
    "read_wav",
    "resample_linear",
    "stack_features",
    "stft",
    "write_wav",
]
