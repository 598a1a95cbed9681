from typing import List, Optional

import numpy as np
from loguru import logger

from protosed.models.events import DetectedEvent, PostFilterConfig


class PostFilterAgent:
    """Agent for turning frame probabilities into duration-filtered events"""

    @classmethod
    def runs(cls, probs: np.ndarray, threshold: float, merge_gap_frames: int = 0) -> List[tuple]:
        """Maximal [start, end) frame runs with prob > threshold"""
        above = np.concatenate([[False], np.asarray(probs) > threshold, [False]])
        edges = np.flatnonzero(np.diff(above.astype(np.int8)))
        spans = [(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])]
        if merge_gap_frames <= 0 or not spans:
            return spans
        merged = [spans[0]]
        for start, end in spans[1:]:
            if start - merged[-1][1] <= merge_gap_frames:
                merged[-1] = (merged[-1][0], end)
            else:
                merged.append((start, end))
        return merged

    @classmethod
    def threshold_to_events(
        cls,
        probs: np.ndarray,
        threshold: float,
        frame_dur: float,
        start_time: float = 0.0,
        merge_gap_frames: int = 0,
        audiofilename: Optional[str] = None,
    ) -> List[DetectedEvent]:
        """
        Runs of frames with prob > threshold become events.

        Frame t spans [start_time + t*frame_dur, start_time + (t+1)*frame_dur);
        the event score is the mean probability over its frames.
        """
        probs = np.asarray(probs, dtype=np.float64)
        events = []
        for start, end in cls.runs(probs, threshold, merge_gap_frames):
            events.append(
                DetectedEvent(
                    onset=start_time + start * frame_dur,
                    offset=start_time + end * frame_dur,
                    score=float(np.clip(probs[start:end].mean(), 0.0, 1.0)),
                    audiofilename=audiofilename,
                )
            )
        return events

    @classmethod
    def duration_filter(
        cls,
        events: List[DetectedEvent],
        t_max: float,
        alpha: float,
        beta: float = 2.0,
    ) -> List[DetectedEvent]:
        """Keep events with alpha*t_max <= duration <= beta*t_max, order preserved"""
        low, high = alpha * t_max, beta * t_max
        kept = [event for event in events if low <= event.duration <= high]
        if len(kept) != len(events):
            logger.debug(f"Duration filter [{low:.3f}s, {high:.3f}s] removed {len(events) - len(kept)} events")
        return kept

    @classmethod
    def apply(
        cls,
        probs: np.ndarray,
        config: PostFilterConfig,
        frame_dur: float,
        start_time: float = 0.0,
        merge_gap_frames: int = 0,
        audiofilename: Optional[str] = None,
    ) -> List[DetectedEvent]:
        events = cls.threshold_to_events(probs, config.threshold, frame_dur, start_time, merge_gap_frames, audiofilename)
        return cls.duration_filter(events, config.t_max, config.alpha, config.beta)
