"""
Model checkpoints.

Layout: magic "MCSN1", format version (u32), length-prefixed UTF-8 config
block of `key = value` lines, record count (u32), then one record per
parameter or buffer: length-prefixed name, rank, dims, little-endian f32
payload. The whole file must be consumed exactly.
"""

from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from protosed.core.config import RunConfig, feature_hash, parse_config_text
from protosed.core.errors import CheckpointError, ConfigError
from protosed.dsp.features import FeatureStats
from protosed.storage.records import ByteReader, pack_array, pack_text, pack_u32
from protosed.tensor import ParamStore

MAGIC = b"MCSN1"
FORMAT_VERSION = 1
META_PREFIX = "meta."


class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: RunConfig
    state: Dict[str, np.ndarray]
    feature_hash: str
    n_bins: int = 128
    best_val_acc: float = 0.0
    best_epoch: int = -1
    stats: Optional[FeatureStats] = None

    def config_block(self) -> str:
        meta = {
            "feature_hash": self.feature_hash,
            "n_bins": str(self.n_bins),
            "best_val_acc": repr(float(self.best_val_acc)),
            "best_epoch": str(self.best_epoch),
        }
        if self.stats is not None:
            meta["stats_mean"] = ",".join(repr(float(v)) for v in self.stats.mean)
            meta["stats_std"] = ",".join(repr(float(v)) for v in self.stats.std)
        lines = "".join(f"{META_PREFIX}{key} = {value}\n" for key, value in meta.items())
        return self.config.to_text() + lines


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    parts = [MAGIC, pack_u32(FORMAT_VERSION), pack_text(checkpoint.config_block()), pack_u32(len(checkpoint.state))]
    for name in sorted(checkpoint.state):
        parts.append(pack_text(name))
        parts.append(pack_array(checkpoint.state[name]))
    return b"".join(parts)


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = ByteReader(data, CheckpointError, source)
    if reader.read(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")

    flat = parse_config_text(reader.text(), source)
    meta = {key[len(META_PREFIX):]: value for key, value in flat.items() if key.startswith(META_PREFIX)}
    try:
        config = RunConfig.from_flat({key: value for key, value in flat.items() if not key.startswith(META_PREFIX)})
    except ConfigError as e:
        raise CheckpointError(f"{source}: embedded config is invalid: {e}") from e

    state = {}
    for _ in range(reader.u32()):
        name = reader.text()
        state[name] = reader.array()
    reader.expect_end()

    if "feature_hash" not in meta:
        raise CheckpointError(f"{source}: config block lacks meta.feature_hash")
    stats = None
    if meta.get("stats_mean") and meta.get("stats_std"):
        stats = FeatureStats(
            mean=[float(v) for v in meta["stats_mean"].split(",")],
            std=[float(v) for v in meta["stats_std"].split(",")],
        )
    return Checkpoint(
        config=config,
        state=state,
        feature_hash=meta["feature_hash"],
        n_bins=int(meta.get("n_bins", 128)),
        best_val_acc=float(meta.get("best_val_acc", 0.0)),
        best_epoch=int(meta.get("best_epoch", -1)),
        stats=stats,
    )


def save_checkpoint(
    path: Union[str, Path],
    params: ParamStore,
    config: RunConfig,
    n_bins: int = 128,
    best_val_acc: float = 0.0,
    best_epoch: int = -1,
    stats: Optional[FeatureStats] = None,
) -> Path:
    """Write params, buffers and config atomically to `path`"""
    checkpoint = Checkpoint(
        config=config,
        state=params.state(),
        feature_hash=feature_hash(config),
        n_bins=n_bins,
        best_val_acc=best_val_acc,
        best_epoch=best_epoch,
        stats=stats,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint))
    tmp.replace(path)
    logger.debug(f"Checkpoint written to {path} (val_acc={best_val_acc:.4f}, epoch={best_epoch})")
    return path


def load_checkpoint(
    path: Union[str, Path],
    expected_hash: Optional[str] = None,
    force: bool = False,
) -> Checkpoint:
    """
    Read a checkpoint.

    Args:
        path: checkpoint file
        expected_hash: feature hash of the current run config
        force: accept a feature-hash mismatch with a warning

    Returns:
        Decoded Checkpoint
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes(), str(path))
    if expected_hash is not None and checkpoint.feature_hash != expected_hash:
        message = (
            f"{path}: trained with feature config {checkpoint.feature_hash}, "
            f"current feature config is {expected_hash}"
        )
        if not force:
            raise CheckpointError(message + " (use --force to load anyway)")
        logger.warning(f"{message}; loading anyway (--force)")
    return checkpoint
