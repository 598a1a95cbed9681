"""
Event matching under detection / ground-truth intersection tolerances.

A detection is DTC-valid when its total overlap with ground truth covers at
least `dtc` of its own duration. A ground-truth event is detected when the
DTC-valid detections cover at least `gtc` of it.
"""

from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from protosed.core.errors import UsageError
from protosed.models.events import DetectedEvent, Event, MatchCounts

Timed = Union[DetectedEvent, Event]


class MatchResult(BaseModel):
    tp: List[Event] = []  # detected ground-truth events
    fp: List[DetectedEvent] = []  # detections that are not DTC-valid
    fn: List[Event] = []  # missed ground-truth events

    @property
    def counts(self) -> MatchCounts:
        return MatchCounts(tp=len(self.tp), fp=len(self.fp), fn=len(self.fn))


class EventMatcherAgent:
    """Agent for DTC/GTC matching and event-based precision / recall / F"""

    @classmethod
    def _check_sorted(cls, events: Sequence[Timed], name: str):
        onsets = [event.onset for event in events]
        if any(b < a for a, b in zip(onsets, onsets[1:])):
            raise UsageError(f"{name} must be sorted by onset")

    @classmethod
    def intersections(cls, detections: Sequence[Timed], ground_truth: Sequence[Timed]) -> np.ndarray:
        """[len(detections), len(ground_truth)] overlap durations in seconds"""
        det = np.array([(d.onset, d.offset) for d in detections], dtype=np.float64).reshape(-1, 2)
        ref = np.array([(g.onset, g.offset) for g in ground_truth], dtype=np.float64).reshape(-1, 2)
        overlap = np.minimum(det[:, None, 1], ref[None, :, 1]) - np.maximum(det[:, None, 0], ref[None, :, 0])
        return np.maximum(overlap, 0.0)

    @classmethod
    def match_events(
        cls,
        detections: Sequence[DetectedEvent],
        ground_truth: Sequence[Event],
        dtc: float = 0.5,
        gtc: float = 0.5,
    ) -> MatchResult:
        """
        Match same-class detections against ground truth.

        Args:
            detections: sorted by onset
            ground_truth: sorted by onset
            dtc: detection tolerance ratio
            gtc: ground-truth tolerance ratio

        Returns:
            MatchResult where TP + FN covers every ground-truth event
        """
        cls._check_sorted(detections, "detections")
        cls._check_sorted(ground_truth, "ground truth")
        if not ground_truth:
            return MatchResult(fp=list(detections))
        if not detections:
            return MatchResult(fn=list(ground_truth))

        overlap = cls.intersections(detections, ground_truth)
        det_dur = np.array([d.duration for d in detections])
        ref_dur = np.array([g.duration for g in ground_truth])

        valid = overlap.sum(axis=1) / det_dur >= dtc
        detected = overlap[valid].sum(axis=0) / ref_dur >= gtc

        return MatchResult(
            tp=[g for g, hit in zip(ground_truth, detected) if hit],
            fp=[d for d, ok in zip(detections, valid) if not ok],
            fn=[g for g, hit in zip(ground_truth, detected) if not hit],
        )

    @classmethod
    def precision_recall_f(cls, tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
        """Percentages; zero denominators give 0"""
        precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = 100.0 * tp / (tp + fn) if tp + fn > 0 else 0.0
        return precision, recall, cls.f_measure(precision, recall)

    @classmethod
    def f_measure(cls, precision: float, recall: float) -> float:
        """Harmonic mean of precision and recall (any common unit)"""
        if precision + recall <= 0:
            return 0.0
        return 2 * precision * recall / (precision + recall)
