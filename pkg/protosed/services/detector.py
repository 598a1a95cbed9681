"""
Few-shot detection on long recordings.

Per validation file the first `n_shots` positive events form the support;
everything after the last shot's offset is the query region that gets
scored, thresholded and duration-filtered.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

from protosed.agents.episode_sampler import EpisodeSamplerAgent
from protosed.agents.event_matcher import EventMatcherAgent
from protosed.agents.post_filter import PostFilterAgent
from protosed.core.config import DetectorConfig, EvaluatorConfig
from protosed.core.errors import InputError
from protosed.models.annotations import AnnotationTable
from protosed.models.episode import ClassPool
from protosed.models.events import DetectedEvent, Event, MatchCounts, OperatingPoint, PostFilterConfig
from protosed.network.mcs_net import MIN_FRAMES, MCSNet
from protosed.services.dataset import free_intervals
from protosed.services.features import FeatureBank

DETECTION_COLUMNS = ["Audiofilename", "Starttime", "Endtime", "Score"]
GRID_COLUMNS = [
    "alpha", "threshold", "beta", "class", "tp", "fp", "fn", "tpr", "efpr", "precision", "recall", "f_measure",
]


class FilePrototypes(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    file_id: str
    class_name: str
    positive: np.ndarray  # [dim]
    negative: np.ndarray  # [dim]
    t_max: float  # longest support shot, seconds
    window_dur: float  # seconds
    n_frames: int
    query_start: float  # offset of the last support shot, seconds
    shots: List[Tuple[float, float]]
    low_energy_negatives: bool = False


class FrameScores(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    file_id: str
    probs: np.ndarray  # per frame of the query region, in [0, 1]
    start_frame: int
    frame_dur: float

    @property
    def start_time(self) -> float:
        return self.start_frame * self.frame_dur

    @property
    def hours(self) -> float:
        return len(self.probs) * self.frame_dur / 3600.0


class FileDetection(BaseModel):
    """Everything grid search needs for one file, scored once"""

    prototypes: FilePrototypes
    scores: FrameScores
    ground_truth: List[Event]


class GridSearchResult(BaseModel):
    points: List[OperatingPoint]
    best_index: int

    @property
    def best(self) -> OperatingPoint:
        return self.points[self.best_index]


def audio_name(file_id: str) -> str:
    return Path(file_id).name


def _next_event(onset: float, excluded: List[Tuple[float, float]], limit: Optional[float] = None) -> Optional[float]:
    """Where a negative window starting at `onset` must stop: the next excluded onset, or `limit`"""
    ends = [start for start, _ in excluded if start > onset]
    if limit is not None:
        ends.append(limit)
    return min(ends) if ends else None


class DetectorService:
    """Service for prototype building, frame scoring and post-filter grid search"""

    def class_of_interest(self, table: AnnotationTable, file_id: str) -> str:
        if len(table.classes) > 1:
            logger.warning(f"{file_id}: {len(table.classes)} class columns, detecting {table.classes[0]!r} only")
        return table.classes[0]

    def _embed_mean(self, net: MCSNet, batch: np.ndarray, batch_size: int) -> np.ndarray:
        return net.embed(batch, batch_size).astype(np.float64).mean(axis=0)

    def _low_energy_windows(
        self, bank: FeatureBank, file_id: str, n_frames: int, count: int, avoid: List[Tuple[float, float]]
    ) -> List[int]:
        """Start frames of the `count` quietest windows (PCEN channel) clear of `avoid` where possible"""
        energy = bank.features[file_id][0].mean(axis=1)
        hop = max(1, n_frames // 2)
        starts = list(range(0, max(1, len(energy) - n_frames + 1), hop))
        blocked = [(bank.frame_of(a), bank.frame_of(b)) for a, b in avoid]
        clear = [s for s in starts if all(s + n_frames <= a or s >= b for a, b in blocked)] or starts
        ranked = sorted(clear, key=lambda s: (float(energy[s:s + n_frames].mean()), s))
        return ranked[:count]

    def build_file_prototypes(
        self,
        file_id: str,
        table: AnnotationTable,
        bank: FeatureBank,
        net: MCSNet,
        config: DetectorConfig,
        rng: np.random.Generator,
    ) -> FilePrototypes:
        """
        Positive and negative prototypes of one recording.

        Positive: mean embedding of the first `n_shots` positive events.
        Negative: mean embedding of `n_negatives` windows from the gaps around
        them, or of the quietest windows when no gap is long enough.
        """
        class_name = self.class_of_interest(table, file_id)
        positives = table.positives(class_name)
        if len(positives) < config.n_shots:
            raise InputError(f"{file_id}: {len(positives)} positive events for {class_name!r}, need {config.n_shots}")

        shots = positives[: config.n_shots]
        durations = [offset - onset for onset, offset in shots]
        t_max = max(durations)
        window_dur = max(float(np.mean(durations)), config.min_window)
        n_frames = max(MIN_FRAMES, bank.frames_for(window_dur))
        query_start = shots[-1][1]

        pos_batch = np.stack(
            [bank.crop(file_id, onset, n_frames, offset if offset - onset < window_dur else None) for onset, offset in shots]
        )

        excluded = table.excluded(class_name)
        gaps = [g for g in free_intervals(excluded, 0.0, query_start) if g[1] - g[0] >= window_dur]
        fallback = not gaps
        if fallback:
            logger.warning(f"{file_id}: no gap of {window_dur:.3f}s before the query region; using lowest-energy windows as negatives")
            starts = self._low_energy_windows(bank, file_id, n_frames, config.n_negatives, excluded)
            onsets = [s * bank.config.frame_dur for s in starts]
            neg_batch = np.stack([bank.crop(file_id, t, n_frames, _next_event(t, excluded)) for t in onsets])
        else:
            pool = ClassPool(class_id=class_name, free=[(file_id, a, b) for a, b in gaps])
            negatives = [EpisodeSamplerAgent.draw_negative(pool, window_dur, rng) for _ in range(config.n_negatives)]
            neg_batch = np.stack(
                [bank.crop(file_id, s.onset, n_frames, _next_event(s.onset, excluded, query_start)) for s in negatives]
            )

        return FilePrototypes(
            file_id=file_id,
            class_name=class_name,
            positive=self._embed_mean(net, pos_batch, config.batch_size),
            negative=self._embed_mean(net, neg_batch, config.batch_size),
            t_max=t_max,
            window_dur=window_dur,
            n_frames=n_frames,
            query_start=query_start,
            shots=shots,
            low_energy_negatives=fallback,
        )

    def score_frames(
        self,
        prototypes: FilePrototypes,
        bank: FeatureBank,
        net: MCSNet,
        batch_size: int = 64,
        hop_frames: Optional[int] = None,
        squared: bool = False,
    ) -> FrameScores:
        """
        Positive probability per frame of the query region.

        Windows of `n_frames` slide by `hop_frames` (half a window by default);
        P(pos) = softmax(-d_pos, -d_neg) and a frame averages every window covering it.
        """
        file_id = prototypes.file_id
        frame_dur = bank.config.frame_dur
        total = bank.n_frames(file_id)
        first = min(total, int(np.ceil(prototypes.query_start / frame_dur - 1e-9)))
        n = prototypes.n_frames
        hop = hop_frames or max(1, n // 2)

        starts = list(range(first, total, hop))
        if not starts:
            return FrameScores(file_id=file_id, probs=np.zeros(0), start_frame=first, frame_dur=frame_dur)

        batch = np.stack([bank.crop(file_id, s * frame_dur, n) for s in starts])
        embeddings = net.embed(batch, batch_size).astype(np.float64)
        d_pos = ((embeddings - prototypes.positive) ** 2).sum(axis=1)
        d_neg = ((embeddings - prototypes.negative) ** 2).sum(axis=1)
        if not squared:
            d_pos, d_neg = np.sqrt(d_pos), np.sqrt(d_neg)
        window_probs = expit(d_neg - d_pos)

        sums = np.zeros(total - first)
        counts = np.zeros(total - first)
        for start, prob in zip(starts, window_probs):
            sums[start - first:min(start + n, total) - first] += prob
            counts[start - first:min(start + n, total) - first] += 1
        probs = np.clip(sums / np.maximum(counts, 1), 0.0, 1.0)
        return FrameScores(file_id=file_id, probs=probs, start_frame=first, frame_dur=frame_dur)

    def query_ground_truth(self, file_id: str, table: AnnotationTable, prototypes: FilePrototypes) -> List[Event]:
        """Positive events of the class of interest starting at or after the query region"""
        return [
            Event(audiofilename=audio_name(file_id), onset=onset, offset=offset, class_name=prototypes.class_name)
            for onset, offset in table.positives(prototypes.class_name)
            if onset >= prototypes.query_start
        ]

    def prepare(
        self,
        tables: Dict[str, AnnotationTable],
        bank: FeatureBank,
        net: MCSNet,
        config: DetectorConfig,
        seed: int = 0,
        squared: bool = False,
    ) -> List[FileDetection]:
        """Prototypes, frame scores and query ground truth for every file"""
        rng = np.random.default_rng(seed)
        prepared = []
        for file_id in sorted(tables):
            prototypes = self.build_file_prototypes(file_id, tables[file_id], bank, net, config, rng)
            scores = self.score_frames(prototypes, bank, net, config.batch_size, squared=squared)
            prepared.append(
                FileDetection(
                    prototypes=prototypes,
                    scores=scores,
                    ground_truth=self.query_ground_truth(file_id, tables[file_id], prototypes),
                )
            )
            logger.info(
                f"✓ Scored {file_id}: class {prototypes.class_name!r}, t_max {prototypes.t_max:.3f}s, "
                f"{len(scores.probs)} query frames"
            )
        return prepared

    def detect_file(self, item: FileDetection, alpha: float, beta: float, threshold: float, merge_gap_frames: int = 0) -> List[DetectedEvent]:
        post = PostFilterConfig(alpha=alpha, beta=beta, threshold=threshold, t_max=item.prototypes.t_max)
        return PostFilterAgent.apply(
            item.scores.probs,
            post,
            item.scores.frame_dur,
            start_time=item.scores.start_time,
            merge_gap_frames=merge_gap_frames,
            audiofilename=audio_name(item.prototypes.file_id),
        )

    def detect(self, prepared: List[FileDetection], config: DetectorConfig) -> List[DetectedEvent]:
        events = []
        for item in prepared:
            events.extend(self.detect_file(item, config.alpha, config.beta, config.threshold, config.merge_gap_frames))
        return events

    def operating_point(
        self,
        prepared: List[FileDetection],
        alpha: float,
        threshold: float,
        detector: DetectorConfig,
        evaluator: EvaluatorConfig,
    ) -> OperatingPoint:
        """Micro-averaged counts per class and overall for one (alpha, threshold) cell"""
        per_class: Dict[str, MatchCounts] = {}
        hours: Dict[str, float] = {}
        per_file: Dict[str, MatchCounts] = {}
        for item in prepared:
            events = self.detect_file(item, alpha, detector.beta, threshold, detector.merge_gap_frames)
            counts = EventMatcherAgent.match_events(events, item.ground_truth, evaluator.dtc, evaluator.gtc).counts
            name = item.prototypes.class_name
            per_class[name] = per_class.get(name, MatchCounts()) + counts
            hours[name] = hours.get(name, 0.0) + item.scores.hours
            per_file[item.prototypes.file_id] = counts

        total = sum(per_class.values(), MatchCounts())
        precision, recall, f_measure = EventMatcherAgent.precision_recall_f(total.tp, total.fp, total.fn)
        return OperatingPoint(
            alpha=alpha,
            threshold=threshold,
            beta=detector.beta,
            tpr={name: c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0 for name, c in per_class.items()},
            efpr={name: c.fp / hours[name] if hours[name] > 0 else 0.0 for name, c in per_class.items()},
            counts=total,
            per_file=per_file,
            precision=precision,
            recall=recall,
            f_measure=f_measure,
        )

    def grid_search(
        self,
        prepared: List[FileDetection],
        detector: DetectorConfig,
        evaluator: EvaluatorConfig,
    ) -> GridSearchResult:
        """
        Every (alpha, threshold) combination at fixed beta.

        The best cell is the first maximum of F-measure in grid order
        (alpha ascending, then threshold ascending).
        """
        points = [
            self.operating_point(prepared, alpha, threshold, detector, evaluator)
            for alpha in detector.alpha_grid
            for threshold in detector.threshold_grid
        ]
        best_index = int(np.argmax([point.f_measure for point in points])) if points else 0
        best = points[best_index]
        logger.info(
            f"✓ Grid search over {len(points)} operating points: best alpha={best.alpha}, "
            f"threshold={best.threshold}, F={best.f_measure:.2f}"
        )
        return GridSearchResult(points=points, best_index=best_index)

    def write_detections(self, events: List[DetectedEvent], path: Path) -> Path:
        frame = pd.DataFrame(
            [(e.audiofilename or "", e.onset, e.offset, e.score) for e in events],
            columns=DETECTION_COLUMNS,
        )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        logger.info(f"✓ Wrote {len(events)} detections to {path}")
        return path

    def write_ground_truth(self, prepared: List[FileDetection], path: Path) -> Path:
        frame = pd.DataFrame(
            [(e.audiofilename, e.onset, e.offset, e.class_name) for item in prepared for e in item.ground_truth],
            columns=["Audiofilename", "Starttime", "Endtime", "Class"],
        )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        return path

    def write_grid(self, result: GridSearchResult, path: Path) -> Path:
        """Long-format table: one row per (operating point, class)"""
        rows = []
        for point in result.points:
            for name in sorted(point.tpr):
                rows.append(
                    [point.alpha, point.threshold, point.beta, name, None, None, None,
                     point.tpr[name], point.efpr[name], point.precision, point.recall, point.f_measure]
                )
            rows.append(
                [point.alpha, point.threshold, point.beta, "", point.counts.tp, point.counts.fp, point.counts.fn,
                 None, None, point.precision, point.recall, point.f_measure]
            )
        frame = pd.DataFrame(rows, columns=GRID_COLUMNS)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")

        per_file = pd.DataFrame(
            [(name, c.tp, c.fp, c.fn) for name, c in sorted(result.best.per_file.items())],
            columns=["file", "tp", "fp", "fn"],
        )
        per_file.to_csv(path.with_name(f"{path.stem}_per_file.csv"), index=False, lineterminator="\n")
        return path

    def read_grid(self, path: Path) -> List[OperatingPoint]:
        """Operating points written by `write_grid`, in file order"""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"grid table not found: {path}")
        frame = pd.read_csv(path, keep_default_na=False, dtype={"class": str})
        missing = [c for c in GRID_COLUMNS if c not in frame.columns]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")

        points: List[OperatingPoint] = []
        for (alpha, threshold), group in frame.groupby(["alpha", "threshold"], sort=False):
            classes = group[group["class"] != ""]
            totals = group[group["class"] == ""]
            counts = MatchCounts()
            if len(totals):
                row = totals.iloc[0]
                counts = MatchCounts(tp=int(float(row["tp"])), fp=int(float(row["fp"])), fn=int(float(row["fn"])))
            first = group.iloc[0]
            points.append(
                OperatingPoint(
                    alpha=float(alpha),
                    threshold=float(threshold),
                    beta=float(first["beta"]),
                    tpr={str(r["class"]): float(r["tpr"]) for _, r in classes.iterrows()},
                    efpr={str(r["class"]): float(r["efpr"]) for _, r in classes.iterrows()},
                    counts=counts,
                    precision=float(first["precision"]),
                    recall=float(first["recall"]),
                    f_measure=float(first["f_measure"]),
                )
            )
        return points


detector_service = DetectorService()
