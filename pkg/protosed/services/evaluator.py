"""
Event-based F-measure over detection / ground-truth CSVs, and PSD-ROC / PSDS
over grid-search operating points.
"""

from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from loguru import logger
from pydantic import BaseModel

from protosed.agents.event_matcher import EventMatcherAgent
from protosed.agents.roc import Curve, ROCAgent
from protosed.core.config import EvaluatorConfig
from protosed.core.errors import InputError
from protosed.models.events import DetectedEvent, Event, GroundTruth, MatchCounts, OperatingPoint, PSDSReport

GT_COLUMNS = ["Audiofilename", "Starttime", "Endtime", "Class"]
DET_COLUMNS = ["Audiofilename", "Starttime", "Endtime"]


class EvaluationResult(BaseModel):
    counts: MatchCounts
    precision: float  # percent
    recall: float  # percent
    f_measure: float  # percent
    per_class: Dict[str, MatchCounts] = {}
    per_file: Dict[str, MatchCounts] = {}


def _read_csv(path: Path, columns: List[str], what: str) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"{path}: {e}") from e
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    return frame


class EvaluatorService:
    """Service for scoring detections and building PSDS reports"""

    def read_detections(self, path: Path) -> Dict[str, List[DetectedEvent]]:
        frame = _read_csv(path, DET_COLUMNS, "detection")
        detections: Dict[str, List[DetectedEvent]] = {}
        for line, row in enumerate(frame.itertuples(index=False), start=2):
            record = row._asdict()
            try:
                event = DetectedEvent(
                    audiofilename=str(record["Audiofilename"]),
                    onset=float(record["Starttime"]),
                    offset=float(record["Endtime"]),
                    score=float(record["Score"]) if record.get("Score", "") != "" else 1.0,
                )
            except ValueError as e:
                raise InputError(f"{path} line {line}: {e}") from e
            detections.setdefault(event.audiofilename, []).append(event)
        return {name: sorted(events, key=lambda e: (e.onset, e.offset)) for name, events in detections.items()}

    def read_ground_truth(self, path: Path, hours: Optional[float] = None) -> GroundTruth:
        """
        Ground-truth events per file.

        Without `hours`, evaluated audio is estimated as the latest
        ground-truth offset of each file.
        """
        frame = _read_csv(path, GT_COLUMNS, "ground-truth")
        events: Dict[str, List[Event]] = {}
        for line, row in enumerate(frame.itertuples(index=False), start=2):
            record = row._asdict()
            try:
                event = Event(
                    audiofilename=str(record["Audiofilename"]),
                    onset=float(record["Starttime"]),
                    offset=float(record["Endtime"]),
                    class_name=str(record["Class"]),
                )
            except ValueError as e:
                raise InputError(f"{path} line {line}: {e}") from e
            events.setdefault(event.audiofilename, []).append(event)
        events = {name: sorted(items, key=lambda e: (e.onset, e.offset)) for name, items in events.items()}
        if hours is None:
            hours = sum(max(e.offset for e in items) for items in events.values()) / 3600.0
        return GroundTruth(events=events, hours=hours)

    def evaluate(
        self,
        detections: Dict[str, List[DetectedEvent]],
        ground_truth: GroundTruth,
        config: EvaluatorConfig,
    ) -> EvaluationResult:
        """
        Match each file's detections against its ground truth.

        Counts are summed over files; a file's counts go to the class most
        of its ground-truth events carry.
        """
        per_file: Dict[str, MatchCounts] = {}
        per_class: Dict[str, MatchCounts] = {}
        for name in sorted(set(detections) | set(ground_truth.events)):
            reference = ground_truth.events.get(name, [])
            if name not in ground_truth.events:
                logger.warning(f"{name}: detections for a file without ground truth count as false positives")
            counts = EventMatcherAgent.match_events(detections.get(name, []), reference, config.dtc, config.gtc).counts
            per_file[name] = counts
            if reference:
                labels = [e.class_name for e in reference]
                label = max(sorted(set(labels)), key=labels.count)
                per_class[label] = per_class.get(label, MatchCounts()) + counts

        total = sum(per_file.values(), MatchCounts())
        precision, recall, f_measure = EventMatcherAgent.precision_recall_f(total.tp, total.fp, total.fn)
        return EvaluationResult(
            counts=total,
            precision=precision,
            recall=recall,
            f_measure=f_measure,
            per_class=per_class,
            per_file=per_file,
        )

    def build_report(self, points: List[OperatingPoint], config: EvaluatorConfig) -> PSDSReport:
        """PSD-ROC, PSDS and the best-F operating point of a grid"""
        if not points:
            raise InputError("no operating points to build a ROC from")
        roc = ROCAgent.psd_roc(points, config.alpha_st)
        best = max(points, key=lambda point: point.f_measure)
        return PSDSReport(
            psds=ROCAgent.psds(roc, config.e_max),
            f_measure=best.f_measure,
            precision=best.precision,
            recall=best.recall,
            alpha=best.alpha,
            threshold=best.threshold,
            roc=roc,
            class_curves=ROCAgent.class_curves(points),
        )

    def emit_roc(self, report: PSDSReport, path: Path) -> Path:
        """
        `efpr,mean_tpr` envelope rows to `path`; per-class curves to
        `<stem>_classes.csv` alongside.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(report.roc, columns=["efpr", "mean_tpr"]).to_csv(path, index=False, lineterminator="\n")
        pd.DataFrame(
            [(name, efpr, tpr) for name, curve in sorted(report.class_curves.items()) for efpr, tpr in curve],
            columns=["class", "efpr", "tpr"],
        ).to_csv(self.class_curves_path(path), index=False, lineterminator="\n")
        logger.info(f"✓ ROC with {len(report.roc)} points written to {path}")
        return path

    def class_curves_path(self, path: Path) -> Path:
        return path.with_name(f"{path.stem}_classes.csv")

    def read_roc(self, path: Path) -> Curve:
        frame = _read_csv(path, ["efpr", "mean_tpr"], "ROC")
        return [(float(e), float(t)) for e, t in zip(frame["efpr"], frame["mean_tpr"])]

    def read_class_curves(self, path: Path) -> Dict[str, Curve]:
        frame = _read_csv(self.class_curves_path(Path(path)), ["class", "efpr", "tpr"], "class ROC")
        curves: Dict[str, Curve] = {}
        for name, efpr, tpr in zip(frame["class"].astype(str), frame["efpr"], frame["tpr"]):
            curves.setdefault(name, []).append((float(efpr), float(tpr)))
        return curves

    def write_report(self, values: Dict[str, object], path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{key} = {value}\n" for key, value in values.items()), encoding="utf-8")
        return path


evaluator_service = EvaluatorService()
