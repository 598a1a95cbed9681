import numpy as np
import pytest
from scipy import fft

from protosed.core.config import FeatureConfig
from protosed.core.errors import DimensionError, InputError
from protosed.dsp import (
    AudioClip,
    FeatureStatsAccumulator,
    MelSpectrogram,
    frame_count,
    mel_power,
    mfcc,
    pad_to_min,
    pcen,
    read_wav,
    stack_features,
    stft,
    write_wav,
)
from protosed.dsp.features import MFCC_CHANNEL, PCEN_CHANNEL, mel_filterbank

SR = 22050


def sine(freq: float, duration: float) -> AudioClip:
    t = np.arange(int(round(duration * SR))) / SR
    return AudioClip(samples=0.5 * np.sin(2 * np.pi * freq * t), sample_rate_hz=SR)


class TestSTFT:
    def test_frame_count(self):
        assert frame_count(SR) == 83
        assert frame_count(1024) == 1
        assert frame_count(1023) == 0

    def test_zero_signal(self):
        spec = stft(AudioClip(samples=np.zeros(4096), sample_rate_hz=SR))
        assert spec.shape == (13, 513)
        assert np.all(np.abs(spec) == 0)

    def test_bin_centred_sine(self):
        spec = stft(sine(20 * SR / 1024, 0.5))
        energy = np.abs(spec[3]) ** 2
        assert energy[19:22].sum() >= 0.95 * energy.sum()

    def test_matches_direct_dft(self, rng):
        samples = rng.uniform(-1, 1, 1024 + 256)
        spec = stft(AudioClip(samples=samples, sample_rate_hz=SR))
        n = np.arange(1024)
        window = 0.5 - 0.5 * np.cos(2 * np.pi * n / 1024)
        frame = samples.astype(np.float32).astype(np.float64)[256:256 + 1024] * window
        basis = np.exp(-2j * np.pi * np.outer(np.arange(513), n) / 1024)
        expected = basis @ frame
        np.testing.assert_allclose(np.abs(spec[1]), np.abs(expected), rtol=1e-4, atol=1e-8)

    def test_shorter_than_window(self):
        with pytest.raises(InputError):
            stft(AudioClip(samples=np.zeros(500), sample_rate_hz=SR))


class TestMel:
    def test_zero_spectrogram(self):
        mel = mel_power(np.zeros((4, 513), dtype=complex))
        assert mel.values.shape == (4, 128)
        assert np.all(mel.values == 0)

    def test_unit_power_gives_filter_weight_sums(self):
        mel = mel_power(np.ones((1, 513), dtype=complex))
        np.testing.assert_allclose(mel.values[0], mel_filterbank(SR, 1024, 128, 0.0, None).sum(axis=1))

    def test_impulse_hits_at_most_two_filters(self):
        spec = np.zeros((1, 513), dtype=complex)
        spec[0, 100] = 1.0
        assert np.count_nonzero(mel_power(spec).values) <= 2

    def test_energy_bound(self, rng):
        peak = mel_filterbank(SR, 1024, 128, 0.0, None).sum(axis=0).max()
        for _ in range(50):
            spec = rng.standard_normal((3, 513)) + 1j * rng.standard_normal((3, 513))
            spec *= rng.uniform(0.0, 100.0)
            mel = mel_power(spec).values
            power = np.abs(spec) ** 2
            assert np.all(mel.sum(axis=1) <= peak * power.sum(axis=1) * (1 + 1e-9))

    def test_bin_mismatch(self):
        with pytest.raises(DimensionError):
            mel_power(np.ones((2, 100), dtype=complex))

    def test_rejects_negative_energies(self):
        with pytest.raises(ValueError):
            MelSpectrogram(values=-np.ones((2, 3)))


class TestMFCC:
    def test_constant_frame(self):
        c = 3.0
        coefficients = mfcc(MelSpectrogram(values=np.full((2, 128), c)))
        assert coefficients[0, 0] == pytest.approx(np.sqrt(128) * np.log(c + 1e-10))
        np.testing.assert_allclose(coefficients[:, 1:], 0.0, atol=1e-9)
        np.testing.assert_array_equal(coefficients[0], coefficients[1])

    def test_matches_direct_dct(self, rng):
        values = rng.uniform(0.01, 10.0, (1, 128))
        coefficients = mfcc(MelSpectrogram(values=values))[0]
        x = np.log(values[0] + 1e-10)
        n = np.arange(128)
        expected = np.array(
            [
                np.sqrt((1 if k == 0 else 2) / 128) * np.sum(x * np.cos(np.pi * k * (2 * n + 1) / 256))
                for k in range(128)
            ]
        )
        np.testing.assert_allclose(coefficients, expected, rtol=1e-5, atol=1e-9)

    def test_inverse_dct_recovers_log_mel(self, rng):
        values = rng.uniform(0.0, 50.0, (6, 128))
        restored = fft.idct(mfcc(MelSpectrogram(values=values)), type=2, norm="ortho", axis=-1)
        np.testing.assert_allclose(restored, np.log(values + 1e-10), atol=1e-4)


class TestPCEN:
    def test_zero_input(self):
        assert np.all(pcen(MelSpectrogram(values=np.zeros((10, 4)))) == 0)

    def test_constant_steady_state(self):
        out = pcen(MelSpectrogram(values=np.ones((2000, 4))))
        expected = (1 / (1e-6 + 1) ** 0.98 + 2) ** 0.5 - 2 ** 0.5
        np.testing.assert_allclose(out[-1], expected, atol=1e-3)
        assert expected == pytest.approx(0.3178, abs=1e-4)

    def test_smoother_starts_at_first_frame(self):
        energy = np.array([[4.0], [4.0], [0.0]])
        out = pcen(MelSpectrogram(values=energy))
        expected = (4.0 / (1e-6 + 4.0) ** 0.98 + 2) ** 0.5 - 2 ** 0.5
        assert out[0, 0] == pytest.approx(expected)
        assert out[1, 0] == pytest.approx(expected)

    def test_monotone_in_energy(self, rng):
        for _ in range(50):
            energy = rng.uniform(0.0, 5.0, (20, 8))
            louder = energy.copy()
            louder[-1] += rng.uniform(0.0, 5.0, 8)
            base = pcen(MelSpectrogram(values=energy))
            raised = pcen(MelSpectrogram(values=louder))
            np.testing.assert_allclose(raised[:-1], base[:-1], rtol=1e-12)
            assert np.all(raised[-1] >= base[-1])

    def test_near_gain_invariance(self):
        quiet = pcen(MelSpectrogram(values=np.ones((3000, 2))))[-1, 0]
        loud = pcen(MelSpectrogram(values=10 * np.ones((3000, 2))))[-1, 0]
        assert abs(loud - quiet) / quiet < 0.05


class TestStacking:
    def test_one_second_shape(self):
        features = stack_features(sine(440, 1.0))
        assert features.values.shape == (2, 83, 128)
        assert features.values.dtype == np.float32

    def test_zero_audio(self):
        features = stack_features(AudioClip(samples=np.zeros(SR), sample_rate_hz=SR)).values
        assert np.all(features[PCEN_CHANNEL] == 0)
        np.testing.assert_array_equal(features[MFCC_CHANNEL], np.broadcast_to(features[MFCC_CHANNEL][0], features[MFCC_CHANNEL].shape))

    def test_deterministic(self):
        clip = sine(880, 0.6)
        np.testing.assert_array_equal(stack_features(clip).values, stack_features(clip).values)

    def test_short_clip_is_padded(self):
        features = stack_features(sine(440, 0.05))
        assert features.frames == frame_count(int(round(0.2 * SR)))

    def test_rate_mismatch(self):
        with pytest.raises(InputError):
            stack_features(AudioClip(samples=np.zeros(16000), sample_rate_hz=16000))

    def test_standardization(self):
        config = FeatureConfig(n_mels=16)
        maps = [stack_features(sine(f, 0.5), config).values for f in (300, 600, 1200)]
        accumulator = FeatureStatsAccumulator()
        for values in maps:
            accumulator.add(values)
        stats = accumulator.finalize()
        standardized = np.concatenate([stats.apply(v) for v in maps], axis=1)
        np.testing.assert_allclose(standardized.mean(axis=(1, 2)), 0.0, atol=1e-4)
        np.testing.assert_allclose(standardized.std(axis=(1, 2)), 1.0, atol=1e-3)


class TestAudio:
    def test_pad_to_min(self):
        clip = sine(440, 0.1)
        padded = pad_to_min(clip, 0.2)
        assert len(padded.samples) == int(round(0.2 * SR))
        np.testing.assert_array_equal(padded.samples[: len(clip.samples)], clip.samples)
        assert np.all(padded.samples[len(clip.samples):] == 0)

    def test_pad_to_min_leaves_long_clips(self):
        exact = sine(440, 0.2)
        long = sine(440, 1.0)
        assert pad_to_min(exact, 0.2) is exact
        assert pad_to_min(long, 0.2) is long

    def test_rejects_multichannel_samples(self):
        with pytest.raises(ValueError):
            AudioClip(samples=np.zeros((2, 10)))

    def test_wav_roundtrip(self, tmp_path):
        clip = sine(440, 0.3)
        write_wav(tmp_path / "a.wav", clip)
        loaded = read_wav(tmp_path / "a.wav")
        assert loaded.sample_rate_hz == SR
        np.testing.assert_allclose(loaded.samples, clip.samples, atol=1e-4)

    def test_rate_mismatch_and_resample(self, tmp_path):
        write_wav(tmp_path / "b.wav", AudioClip(samples=np.zeros(16000), sample_rate_hz=16000))
        with pytest.raises(InputError):
            read_wav(tmp_path / "b.wav")
        resampled = read_wav(tmp_path / "b.wav", resample=True)
        assert len(resampled.samples) == SR

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "broken.wav"
        path.write_bytes(b"RIFF0000WAVEjunk")
        with pytest.raises(InputError):
            read_wav(path)
