"""
Exception hierarchy shared by every protosed module.

Each error carries the process exit code the CLI reports for it:
1 for bad input, 2 for runtime failures.
"""


class ProtoSEDError(Exception):
    """Base class for all protosed errors"""

    exit_code = 2


class InputError(ProtoSEDError):
    """Invalid user-supplied data, arguments or files"""

    exit_code = 1


class UsageError(InputError):
    """An API or CLI was called in a way its contract does not allow"""


class DimensionError(InputError):
    """Tensor or feature shapes are incompatible"""


class ConfigError(InputError):
    """Unknown key or invalid value in a RunConfig"""


class AnnotationError(InputError):
    """Malformed annotation CSV"""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DatasetError(InputError):
    """Dataset layout problems (orphan files, missing roots)"""


class EpisodeError(InputError):
    """Not enough segments to build the requested episode"""


class CheckpointError(InputError):
    """Checkpoint integrity, magic or config-hash mismatch"""


class FeatureCacheError(InputError):
    """Feature cache file is corrupt or was built with another config"""


class TrainingError(ProtoSEDError):
    """Training diverged or could not continue"""
