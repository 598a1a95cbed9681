from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class Label(str, Enum):
    POS = "POS"
    NEG = "NEG"
    UNK = "UNK"


class AnnotationRow(BaseModel):
    """One annotated interval with a label per class column"""

    audiofilename: str
    starttime: float = Field(ge=0)  # seconds
    endtime: float  # seconds
    labels: Dict[str, Label]

    @model_validator(mode="after")
    def _ordered(self) -> "AnnotationRow":
        if self.endtime <= self.starttime:
            raise ValueError(f"Endtime {self.endtime} must exceed Starttime {self.starttime}")
        return self

    @property
    def duration(self) -> float:
        return self.endtime - self.starttime


class AnnotationTable(BaseModel):
    """
    Parsed annotation CSV.

    Training tables may carry several class columns; validation tables carry a
    single class-of-interest column.
    """

    source: Optional[str] = None
    classes: List[str]
    rows: List[AnnotationRow] = []
    rejected: int = 0  # rows dropped while parsing

    def intervals(self, class_name: str, label: Label) -> List[Tuple[float, float]]:
        """Chronological (onset, offset) pairs carrying `label` for `class_name`"""
        found = [
            (row.starttime, row.endtime)
            for row in self.rows
            if row.labels.get(class_name) == label
        ]
        return sorted(found)

    def positives(self, class_name: str) -> List[Tuple[float, float]]:
        return self.intervals(class_name, Label.POS)

    def excluded(self, class_name: str) -> List[Tuple[float, float]]:
        """POS and UNK intervals; negatives may never be drawn from these"""
        return sorted(self.intervals(class_name, Label.POS) + self.intervals(class_name, Label.UNK))


class ManifestEntry(BaseModel):
    file_id: str  # path of the wav relative to the dataset root
    wav_path: Path
    annotation_path: Path
    duration: float = Field(gt=0)  # seconds


class DatasetManifest(BaseModel):
    root: Path
    split: Literal["train", "val"]
    entries: List[ManifestEntry] = []
    orphans: List[Path] = []  # wav or csv files without a partner

    def __len__(self) -> int:
        return len(self.entries)
