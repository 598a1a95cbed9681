from typing import List, Optional

import numpy as np
from loguru import logger

from protosed.core.errors import EpisodeError
from protosed.models.episode import ClassPool, Episode, EpisodeCorpus
from protosed.models.events import Segment


class EpisodeSamplerAgent:
    """Agent for drawing n-way k-shot episodes and random-start crops"""

    @classmethod
    def random_start_crop(
        cls,
        segment: Segment,
        crop_dur: float,
        rng: np.random.Generator,
        file_duration: Optional[float] = None,
    ) -> Segment:
        """
        Crop a `crop_dur` window overlapping `segment` by at least half its length.

        The start is uniform in [max(0, onset - crop/2), min(offset - crop/2, file_dur - crop)].
        Segments shorter than the crop come back unchanged and flagged `padded`.
        """
        if segment.duration < crop_dur:
            return segment.model_copy(update={"padded": True})

        low = max(0.0, segment.onset - crop_dur / 2)
        high = segment.offset - crop_dur / 2
        if file_duration is not None:
            high = min(high, file_duration - crop_dur)
        start = float(rng.uniform(low, high)) if high > low else low
        return segment.model_copy(update={"onset": start, "offset": start + crop_dur, "padded": False})

    @classmethod
    def draw_negative(cls, pool: ClassPool, crop_dur: float, rng: np.random.Generator) -> Segment:
        """
        A `crop_dur` window from the class's POS/UNK-free intervals.

        Gaps are picked weighted by how many start positions they offer; when
        no gap fits a full crop the longest gap is used whole, flagged `padded`.
        """
        if not pool.free:
            raise EpisodeError(f"class {pool.class_id!r} has no audio outside its positive events")

        lengths = np.array([end - start for _, start, end in pool.free])
        fitting = np.flatnonzero(lengths >= crop_dur)
        if fitting.size == 0:
            file_id, start, end = pool.free[int(np.argmax(lengths))]
            return Segment(file_id=file_id, onset=start, offset=end, class_id=pool.class_id, polarity="negative", padded=True)

        slack = lengths[fitting] - crop_dur
        weights = slack / slack.sum() if slack.sum() > 0 else np.full(fitting.size, 1.0 / fitting.size)
        file_id, start, end = pool.free[int(fitting[rng.choice(fitting.size, p=weights)])]
        onset = float(rng.uniform(start, end - crop_dur)) if end - crop_dur > start else start
        return Segment(file_id=file_id, onset=onset, offset=onset + crop_dur, class_id=pool.class_id, polarity="negative")

    @classmethod
    def eligible_classes(cls, corpus: EpisodeCorpus, k_shot: int, q_queries: int) -> List[str]:
        return [
            name
            for name in corpus.classes()
            if len(corpus.pools[name].positives) >= k_shot + q_queries and corpus.pools[name].free
        ]

    @classmethod
    def sample_episode(
        cls,
        corpus: EpisodeCorpus,
        n_way: int,
        k_shot: int,
        q_queries: int,
        rng: np.random.Generator,
        crop_dur: Optional[float] = None,
    ) -> Episode:
        """
        Draw one episode.

        Classes and positives are sampled uniformly without replacement; with
        `crop_dur` every positive is replaced by a random-start crop.

        Args:
            corpus: per-class positive segments and negative regions
            n_way: classes per episode
            k_shot: positive (and negative) supports per class
            q_queries: positive queries per class
            rng: the only source of randomness
            crop_dur: crop length in seconds, also the negative window length

        Returns:
            Episode with ways ordered as sampled
        """
        eligible = cls.eligible_classes(corpus, k_shot, q_queries)
        if len(eligible) < n_way:
            raise EpisodeError(
                f"{n_way}-way {k_shot}-shot episodes with {q_queries} queries need {n_way} classes with "
                f">= {k_shot + q_queries} positives and some negative audio; only {len(eligible)} qualify "
                f"({', '.join(eligible) or 'none'})"
            )

        chosen = [eligible[i] for i in rng.choice(len(eligible), size=n_way, replace=False)]
        negative_dur = crop_dur if crop_dur is not None else 0.2
        support_pos, support_neg, queries = [], [], []
        for name in chosen:
            pool = corpus.pools[name]
            picks = rng.choice(len(pool.positives), size=k_shot + q_queries, replace=False)
            segments = [pool.positives[i] for i in picks]
            if crop_dur is not None:
                segments = [
                    cls.random_start_crop(segment, crop_dur, rng, corpus.durations.get(segment.file_id))
                    for segment in segments
                ]
            support_pos.append(segments[:k_shot])
            queries.append(segments[k_shot:])
            support_neg.append([cls.draw_negative(pool, negative_dur, rng) for _ in range(k_shot)])

        logger.debug(f"Sampled episode over classes {chosen}")
        return Episode(
            n_way=n_way,
            k_shot=k_shot,
            q_queries=q_queries,
            classes=chosen,
            support_pos=support_pos,
            support_neg=support_neg,
            queries=queries,
        )
