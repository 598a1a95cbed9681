from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Segment(BaseModel):
    """A labelled stretch of one recording"""

    model_config = ConfigDict(frozen=True)

    file_id: str
    onset: float = Field(ge=0)  # seconds
    offset: float  # seconds
    class_id: str
    polarity: Literal["positive", "negative"] = "positive"
    padded: bool = False  # shorter than the requested crop

    @model_validator(mode="after")
    def _ordered(self) -> "Segment":
        if self.offset <= self.onset:
            raise ValueError(f"segment offset {self.offset} must exceed onset {self.onset}")
        return self

    @property
    def duration(self) -> float:
        return self.offset - self.onset

    @property
    def key(self) -> Tuple[str, float, float]:
        return self.file_id, self.onset, self.offset


class DetectedEvent(BaseModel):
    onset: float  # seconds
    offset: float  # seconds
    score: float = Field(ge=0, le=1)  # mean positive probability over the event
    audiofilename: Optional[str] = None

    @model_validator(mode="after")
    def _ordered(self) -> "DetectedEvent":
        if self.offset <= self.onset:
            raise ValueError(f"event offset {self.offset} must exceed onset {self.onset}")
        return self

    @property
    def duration(self) -> float:
        return self.offset - self.onset


class Event(BaseModel):
    """Ground-truth event"""

    audiofilename: str
    onset: float
    offset: float
    class_name: str

    @model_validator(mode="after")
    def _ordered(self) -> "Event":
        if self.offset <= self.onset:
            raise ValueError(f"event offset {self.offset} must exceed onset {self.onset}")
        return self

    @property
    def duration(self) -> float:
        return self.offset - self.onset


class GroundTruth(BaseModel):
    events: Dict[str, List[Event]] = {}  # per audio file, sorted by onset
    hours: float = Field(0.0, ge=0)  # evaluated audio


class PostFilterConfig(BaseModel):
    alpha: float = 0.5
    beta: float = 2.0
    threshold: float = 0.5
    t_max: float = Field(gt=0)  # seconds, longest support shot

    @model_validator(mode="after")
    def _ranges(self) -> "PostFilterConfig":
        if not 0 < self.alpha < self.beta:
            raise ValueError(f"alpha {self.alpha} must satisfy 0 < alpha < beta={self.beta}")
        if not 0 <= self.threshold < 1:
            raise ValueError(f"threshold {self.threshold} must lie in [0, 1)")
        return self


class MatchCounts(BaseModel):
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn)


class OperatingPoint(BaseModel):
    """One (alpha, threshold) cell of the post-filter grid"""

    alpha: float
    threshold: float
    beta: float = 2.0
    tpr: Dict[str, float] = {}  # per class, in [0, 1]
    efpr: Dict[str, float] = {}  # per class, false positives per hour
    counts: MatchCounts = MatchCounts()
    per_file: Dict[str, MatchCounts] = {}
    precision: float = 0.0  # percent
    recall: float = 0.0  # percent
    f_measure: float = 0.0  # percent

    @model_validator(mode="after")
    def _ranges(self) -> "OperatingPoint":
        for name, value in self.tpr.items():
            if not 0 <= value <= 1:
                raise ValueError(f"TPR for {name} must lie in [0, 1], got {value}")
        for name, value in self.efpr.items():
            if value < 0:
                raise ValueError(f"eFPR for {name} must be >= 0, got {value}")
        return self

    @property
    def mean_efpr(self) -> float:
        return float(np.mean(list(self.efpr.values()))) if self.efpr else 0.0


class PSDSReport(BaseModel):
    psds: float = Field(ge=0, le=1)
    f_measure: float = 0.0  # percent
    precision: float = 0.0  # percent
    recall: float = 0.0  # percent
    alpha: Optional[float] = None
    threshold: Optional[float] = None
    roc: List[Tuple[float, float]] = []  # (eFPR, mean_TPR), sorted by eFPR
    class_curves: Dict[str, List[Tuple[float, float]]] = {}

    @model_validator(mode="after")
    def _monotone(self) -> "PSDSReport":
        tprs = [tpr for _, tpr in self.roc]
        if any(b < a for a, b in zip(tprs, tprs[1:])):
            raise ValueError("ROC mean_TPR must be non-decreasing")
        return self
