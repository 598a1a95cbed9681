import numpy as np
import pytest
from pydantic import ValidationError

from protosed.agents import PostFilterAgent
from protosed.models import DetectedEvent, PostFilterConfig


def event(onset: float, duration: float) -> DetectedEvent:
    return DetectedEvent(onset=onset, offset=onset + duration, score=0.5)


class TestThreshold:
    def test_single_run(self):
        events = PostFilterAgent.threshold_to_events(np.array([0.1, 0.9, 0.9, 0.1]), 0.5, frame_dur=0.1)
        assert len(events) == 1
        assert events[0].onset == pytest.approx(0.1)
        assert events[0].offset == pytest.approx(0.3)
        assert events[0].score == pytest.approx(0.9)

    def test_high_threshold_gives_nothing(self):
        assert PostFilterAgent.threshold_to_events(np.array([0.1, 0.9, 0.9, 0.1]), 0.95, frame_dur=0.1) == []

    def test_strictly_greater_than_threshold(self):
        assert PostFilterAgent.runs(np.array([0.5, 0.5]), 0.5) == []

    def test_runs_touching_the_edges(self):
        assert PostFilterAgent.runs(np.array([0.9, 0.1, 0.9]), 0.5) == [(0, 1), (2, 3)]

    def test_start_time_offset(self):
        events = PostFilterAgent.threshold_to_events(np.array([0.9, 0.1]), 0.5, frame_dur=0.5, start_time=10.0)
        assert (events[0].onset, events[0].offset) == (10.0, 10.5)

    def test_merge_gap(self):
        probs = np.array([0.9, 0.1, 0.9, 0.1, 0.1, 0.9])
        assert PostFilterAgent.runs(probs, 0.5) == [(0, 1), (2, 3), (5, 6)]
        assert PostFilterAgent.runs(probs, 0.5, merge_gap_frames=1) == [(0, 3), (5, 6)]
        assert PostFilterAgent.runs(probs, 0.5, merge_gap_frames=2) == [(0, 6)]

    def test_raising_threshold_never_adds_frames(self, rng):
        probs = rng.uniform(size=1000)
        covered = []
        for threshold in np.linspace(0.0, 0.95, 20):
            mask = np.zeros(len(probs), dtype=bool)
            for start, end in PostFilterAgent.runs(probs, threshold):
                mask[start:end] = True
            covered.append(mask)
        for lower, higher in zip(covered, covered[1:]):
            assert not np.any(higher & ~lower)


class TestDurationFilter:
    def test_keeps_plausible_durations(self):
        events = [event(0.0, 0.9), event(5.0, 3.0), event(10.0, 4.5)]
        kept = PostFilterAgent.duration_filter(events, t_max=2.0, alpha=0.5, beta=2.0)
        assert [e.duration for e in kept] == [3.0]

    def test_bounds_are_inclusive(self):
        events = [event(0.0, 1.0), event(5.0, 4.0)]
        assert len(PostFilterAgent.duration_filter(events, t_max=2.0, alpha=0.5, beta=2.0)) == 2

    def test_idempotent_and_ordered(self, rng):
        events = [event(float(i), float(d)) for i, d in enumerate(rng.uniform(0.1, 5.0, 50))]
        once = PostFilterAgent.duration_filter(events, 1.0, 0.4, 2.0)
        assert PostFilterAgent.duration_filter(once, 1.0, 0.4, 2.0) == once
        assert [e.onset for e in once] == sorted(e.onset for e in once)

    def test_apply_chains_both_steps(self):
        probs = np.array([0.9] * 2 + [0.1] * 2 + [0.9] * 6 + [0.1])
        config = PostFilterConfig(alpha=0.5, beta=2.0, threshold=0.5, t_max=0.5)
        events = PostFilterAgent.apply(probs, config, frame_dur=0.1, audiofilename="a.wav")
        assert len(events) == 1
        assert events[0].onset == pytest.approx(0.4)
        assert events[0].duration == pytest.approx(0.6)
        assert events[0].audiofilename == "a.wav"


class TestPostFilterConfig:
    @pytest.mark.parametrize(
        "settings",
        [
            dict(alpha=0.0, t_max=1.0),
            dict(alpha=2.0, beta=2.0, t_max=1.0),
            dict(threshold=1.0, t_max=1.0),
            dict(threshold=-0.1, t_max=1.0),
            dict(t_max=0.0),
        ],
    )
    def test_invalid(self, settings):
        with pytest.raises(ValidationError):
            PostFilterConfig(**settings)
