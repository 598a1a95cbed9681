from pathlib import Path
from typing import Dict, Optional

import numpy as np
from loguru import logger

from protosed.cache.feature_cache import FeatureCache
from protosed.core.config import FeatureConfig, feature_hash
from protosed.core.errors import FeatureCacheError
from protosed.dsp.audio import read_wav
from protosed.dsp.features import FeatureStats, FeatureStatsAccumulator, stack_features
from protosed.models.annotations import DatasetManifest, ManifestEntry
from protosed.models.events import Segment
from protosed.workers.extract_worker import ExtractWorker


class FeatureBank:
    """
    Standardized full-file feature maps held in memory.

    Segments are cut by frame index; anything past the end of the file, or
    past the end of a segment shorter than the requested crop, is zero.
    """

    def __init__(self, features: Dict[str, np.ndarray], config: FeatureConfig):
        self.features = features
        self.config = config

    @property
    def n_bins(self) -> int:
        return self.config.n_mels

    def frame_of(self, seconds: float) -> int:
        return int(round(seconds * self.config.sample_rate / self.config.hop))

    def frames_for(self, seconds: float) -> int:
        return max(1, self.frame_of(seconds))

    def n_frames(self, file_id: str) -> int:
        return self.features[file_id].shape[1]

    def crop(self, file_id: str, onset: float, n_frames: int, offset: Optional[float] = None) -> np.ndarray:
        """
        [2, n_frames, bins] starting at `onset`.

        With `offset`, frames from offset on are zero (padded short segments).
        """
        values = self.features[file_id]
        start = self.frame_of(onset)
        stop = start + n_frames
        if offset is not None:
            stop = min(stop, max(start + 1, self.frame_of(offset)))
        out = np.zeros((values.shape[0], n_frames, values.shape[2]), dtype=np.float32)
        chunk = values[:, start:min(stop, values.shape[1])]
        out[:, : chunk.shape[1]] = chunk
        return out

    def segment(self, segment: Segment, n_frames: int) -> np.ndarray:
        return self.crop(segment.file_id, segment.onset, n_frames, segment.offset if segment.padded else None)

    def batch(self, segments, n_frames: int) -> np.ndarray:
        return np.stack([self.segment(segment, n_frames) for segment in segments])


class FeatureService:
    """Service for extracting, caching and loading feature maps"""

    def cache_for(self, cache_dir: Path, config: FeatureConfig) -> FeatureCache:
        return FeatureCache(cache_dir, feature_hash(config))

    def cache_key(self, manifest: DatasetManifest, entry: ManifestEntry) -> str:
        return f"{manifest.split}/{entry.file_id}"

    def extract_file(self, entry: ManifestEntry, config: FeatureConfig) -> np.ndarray:
        """Unstandardized [2, frames, bins] features of one recording"""
        clip = read_wav(entry.wav_path, expected_rate=config.sample_rate, resample=config.resample)
        return stack_features(clip, config).values

    def extract(
        self,
        manifest: DatasetManifest,
        cache: FeatureCache,
        config: FeatureConfig,
        workers: int = 4,
        overwrite: bool = False,
    ) -> int:
        """
        Fill the cache for every manifest entry

        Returns:
            number of files extracted (cached files are skipped unless `overwrite`)
        """
        pending = [entry for entry in manifest.entries if overwrite or not cache.exists(self.cache_key(manifest, entry))]
        skipped = len(manifest.entries) - len(pending)
        if skipped:
            logger.info(f"{skipped} files already cached under {cache.root}")

        def _job(entry: ManifestEntry) -> bool:
            return cache.set(self.cache_key(manifest, entry), self.extract_file(entry, config))

        ExtractWorker(workers).run(pending, _job)
        if pending:
            logger.info(f"✓ Extracted features for {len(pending)} files into {cache.root}")
        return len(pending)

    def compute_stats(self, manifest: DatasetManifest, cache: FeatureCache) -> FeatureStats:
        """Per-channel mean/std over every frame of the corpus"""
        accumulator = FeatureStatsAccumulator()
        for entry in manifest.entries:
            accumulator.add(self._cached(cache, manifest, entry))
        stats = accumulator.finalize()
        logger.info(f"Corpus stats: mean={np.round(stats.mean, 4).tolist()} std={np.round(stats.std, 4).tolist()}")
        return stats

    def _cached(self, cache: FeatureCache, manifest: DatasetManifest, entry: ManifestEntry) -> np.ndarray:
        values = cache.get(self.cache_key(manifest, entry))
        if values is None:
            raise FeatureCacheError(f"no cached features for {entry.file_id} in {cache.root}; run extract first")
        return values

    def load_bank(
        self,
        manifest: DatasetManifest,
        cache: FeatureCache,
        config: FeatureConfig,
        stats: FeatureStats,
    ) -> FeatureBank:
        """Standardized features for every manifest entry"""
        features = {entry.file_id: stats.apply(self._cached(cache, manifest, entry)) for entry in manifest.entries}
        return FeatureBank(features, config)


feature_service = FeatureService()
