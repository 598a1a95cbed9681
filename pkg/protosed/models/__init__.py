from protosed.models.annotations import AnnotationRow, AnnotationTable, DatasetManifest, Label, ManifestEntry
from protosed.models.episode import ClassPool, Episode, EpisodeCorpus, TrainState
from protosed.models.events import (
    DetectedEvent,
    Event,
    GroundTruth,
    MatchCounts,
    OperatingPoint,
    PostFilterConfig,
    PSDSReport,
    Segment,
)

__all__ = [
    "AnnotationRow",
    "AnnotationTable",
    "ClassPool",
    "DatasetManifest",
    "DetectedEvent",
    "Episode",
    "EpisodeCorpus",
    "Event",
    "GroundTruth",
    "Label",
    "ManifestEntry",
    "MatchCounts",
    "OperatingPoint",
    "PSDSReport",
    "PostFilterConfig",
    "Segment",
    "TrainState",
]
