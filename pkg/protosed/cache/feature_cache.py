"""
On-disk cache of full-file feature maps.

One file per recording under `<cache_dir>/<feature_hash>/`:
magic "PSFD1", the 16-character feature hash, then the array as rank,
dims and row-major little-endian f32 values.
"""

from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from protosed.core.errors import FeatureCacheError
from protosed.dsp.features import FeatureStats
from protosed.storage.records import ByteReader, pack_array

MAGIC = b"PSFD1"
HASH_LEN = 16
SUFFIX = ".psfd"
STATS_FILE = "stats.json"


class FeatureCache:
    def __init__(self, cache_dir: Path, config_hash: str):
        if len(config_hash) != HASH_LEN:
            raise FeatureCacheError(f"feature hash must be {HASH_LEN} characters, got {config_hash!r}")
        self.root = Path(cache_dir) / config_hash
        self.config_hash = config_hash

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}{SUFFIX}"

    def exists(self, key: str) -> bool:
        return self.path_for(key).is_file()

    def encode(self, values: np.ndarray) -> bytes:
        return MAGIC + self.config_hash.encode("ascii") + pack_array(values)

    def decode(self, data: bytes, source: str = "<bytes>") -> np.ndarray:
        reader = ByteReader(data, FeatureCacheError, source)
        if reader.read(len(MAGIC)) != MAGIC:
            raise FeatureCacheError(f"{source}: not a feature cache file (bad magic)")
        stored = reader.read(HASH_LEN).decode("ascii", errors="replace")
        if stored != self.config_hash:
            raise FeatureCacheError(
                f"{source}: built with feature config {stored}, current config is {self.config_hash}; re-run extract"
            )
        values = reader.array()
        reader.expect_end()
        return values

    def get(self, key: str) -> Optional[np.ndarray]:
        """Cached features for `key`, None when absent"""
        path = self.path_for(key)
        if not path.is_file():
            return None
        return self.decode(path.read_bytes(), str(path))

    def set(self, key: str, values: np.ndarray) -> bool:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.encode(values))
        tmp.replace(path)
        return True

    def save_stats(self, stats: FeatureStats):
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / STATS_FILE).write_text(stats.model_dump_json(), encoding="utf-8")
        logger.info(f"✓ Corpus feature statistics saved to {self.root / STATS_FILE}")

    def load_stats(self) -> Optional[FeatureStats]:
        path = self.root / STATS_FILE
        if not path.is_file():
            return None
        try:
            return FeatureStats.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise FeatureCacheError(f"{path}: unreadable feature statistics: {e}") from e
