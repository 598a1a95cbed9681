"""
Shared fixtures: seeded randomness, a finite-difference gradient checker,
synthetic tone recordings and a tiny network shape.
"""

from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import pytest
import soundfile as sf

from protosed.core.config import FeatureConfig, ModelConfig
from protosed.tensor import Tensor, no_grad

SAMPLE_RATE = 22050


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def tiny_model() -> ModelConfig:
    return ModelConfig(base_channels=4, reduction_rate=2, embedding_dim=8)


@pytest.fixture
def small_features() -> FeatureConfig:
    return FeatureConfig(n_mels=16)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference scaled by the larger gradient magnitude"""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_gradient(fn: Callable[..., Tensor], inputs: List[np.ndarray], index: int, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar fn(*inputs) with respect to inputs[index]"""
    grad = np.zeros_like(inputs[index])
    target = inputs[index]
    with no_grad():
        for position in np.ndindex(target.shape):
            original = target[position]
            target[position] = original + h
            plus = fn(*[Tensor(x) for x in inputs]).item()
            target[position] = original - h
            minus = fn(*[Tensor(x) for x in inputs]).item()
            target[position] = original
            grad[position] = (plus - minus) / (2 * h)
    return grad


@pytest.fixture
def gradcheck():
    """
    gradcheck(fn, inputs, tol) runs fn on float64 copies of `inputs`, backprops
    and compares every input gradient against central differences.
    """

    def _check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], tol: float = 1e-3, h: float = 1e-6):
        arrays = [np.array(x, dtype=np.float64) for x in inputs]
        tensors = [Tensor(x.copy(), requires_grad=True) for x in arrays]
        fn(*tensors).backward()
        for index, tensor in enumerate(tensors):
            analytic = tensor.grad if tensor.grad is not None else np.zeros_like(arrays[index])
            numeric = numeric_gradient(fn, arrays, index, h)
            error = relative_error(analytic, numeric)
            assert error < tol, f"input {index}: relative error {error:.2e}"

    return _check


def tone(duration: float, events: Sequence[Tuple[float, float, float]], seed: int = 0, noise: float = 0.01) -> np.ndarray:
    """Low-level noise with a sine burst at `freq` Hz inside each (onset, offset, freq)"""
    generator = np.random.default_rng(seed)
    samples = noise * generator.standard_normal(int(round(duration * SAMPLE_RATE)))
    t = np.arange(len(samples)) / SAMPLE_RATE
    for onset, offset, freq in events:
        inside = (t >= onset) & (t < offset)
        samples[inside] += 0.5 * np.sin(2 * np.pi * freq * t[inside])
    return samples.astype(np.float32)


def write_recording(
    wav_path: Path,
    duration: float,
    events: Sequence[Tuple[float, float]],
    freq: float,
    class_column: str,
    seed: int = 0,
    labels: Sequence[str] = (),
) -> Path:
    """A tone recording plus its annotation CSV (same stem); labels default to POS"""
    wav_path = Path(wav_path)
    wav_path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(wav_path), tone(duration, [(a, b, freq) for a, b in events], seed=seed), SAMPLE_RATE, subtype="PCM_16")
    labels = list(labels) or ["POS"] * len(events)
    pd.DataFrame(
        [(wav_path.name, a, b, label) for (a, b), label in zip(events, labels)],
        columns=["Audiofilename", "Starttime", "Endtime", class_column],
    ).to_csv(wav_path.with_suffix(".csv"), index=False)
    return wav_path


def regular_events(count: int, start: float = 0.5, length: float = 0.3, gap: float = 0.5) -> List[Tuple[float, float]]:
    return [(round(start + i * (length + gap), 6), round(start + i * (length + gap) + length, 6)) for i in range(count)]


TONE_CLASSES: Dict[str, float] = {"low": 440.0, "mid": 880.0, "high": 1760.0}


def build_tone_dataset(root: Path, events: int = 9) -> Dict[str, Path]:
    """
    Train root with one recording per class, val root with a Q-column
    recording per class folder; `events` tone bursts each.
    """
    duration = max(8.0, regular_events(events)[-1][1] + 0.5)
    train_root = root / "train"
    val_root = root / "val"
    for index, (name, freq) in enumerate(TONE_CLASSES.items()):
        write_recording(train_root / name / f"{name}_train.wav", duration, regular_events(events), freq, name, seed=index)
        write_recording(val_root / name / f"{name}_val.wav", duration, regular_events(events), freq, "Q", seed=10 + index)
    return {"train": train_root, "val": val_root}


@pytest.fixture
def tone_dataset(tmp_path) -> Dict[str, Path]:
    return build_tone_dataset(tmp_path)
