"""
Dataset discovery and annotation parsing.

A dataset root holds (wav, csv) pairs with matching stems in the same
folder, nested to any depth. Annotation CSVs follow the few-shot layout:
`Audiofilename,Starttime,Endtime,<class>...` with POS / NEG / UNK cells.
"""

import io
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
import soundfile as sf
from loguru import logger
from pydantic import ValidationError

from protosed.core.errors import AnnotationError, DatasetError
from protosed.models.annotations import AnnotationRow, AnnotationTable, DatasetManifest, Label, ManifestEntry
from protosed.models.episode import ClassPool, EpisodeCorpus
from protosed.models.events import Segment

REQUIRED_COLUMNS = ("Audiofilename", "Starttime", "Endtime")
QUERY_COLUMN = "Q"


def free_intervals(excluded: List[Tuple[float, float]], start: float, end: float) -> List[Tuple[float, float]]:
    """Complement of the union of `excluded` within [start, end)"""
    gaps = []
    cursor = start
    for onset, offset in sorted(excluded):
        if onset > cursor:
            gaps.append((cursor, min(onset, end)))
        cursor = max(cursor, offset)
        if cursor >= end:
            break
    if cursor < end:
        gaps.append((cursor, end))
    return [(a, b) for a, b in gaps if b > a]


class DatasetService:
    """Service for scanning dataset folders and reading annotation tables"""

    def scan_dataset(
        self,
        root: Union[str, Path],
        split: str = "train",
        allow_partial: bool = False,
    ) -> DatasetManifest:
        """
        Discover (wav, csv) pairs under `root`

        Args:
            root: dataset folder
            split: "train" or "val"
            allow_partial: skip orphan files instead of aborting

        Returns:
            DatasetManifest ordered by relative posix path
        """
        root = Path(root)
        if not root.is_dir():
            raise DatasetError(f"dataset root not found: {root}")

        wavs = {p.with_suffix(""): p for p in root.rglob("*") if p.suffix.lower() == ".wav"}
        csvs = {p.with_suffix(""): p for p in root.rglob("*") if p.suffix.lower() == ".csv"}
        orphans = sorted(
            [wavs[stem] for stem in wavs.keys() - csvs.keys()] + [csvs[stem] for stem in csvs.keys() - wavs.keys()],
            key=lambda p: p.relative_to(root).as_posix(),
        )

        if orphans:
            listing = ", ".join(p.relative_to(root).as_posix() for p in orphans)
            if not allow_partial:
                raise DatasetError(f"{len(orphans)} unpaired files under {root}: {listing} (use --allow-partial to skip)")
            logger.warning(f"Skipping {len(orphans)} unpaired files: {listing}")

        entries = []
        for stem in sorted(wavs.keys() & csvs.keys(), key=lambda s: s.relative_to(root).as_posix()):
            wav = wavs[stem]
            try:
                duration = sf.info(str(wav)).duration
            except RuntimeError as e:
                raise DatasetError(f"cannot read {wav}: {e}") from e
            entries.append(
                ManifestEntry(
                    file_id=wav.relative_to(root).as_posix(),
                    wav_path=wav,
                    annotation_path=csvs[stem],
                    duration=duration,
                )
            )

        if not entries:
            logger.warning(f"No annotated recordings found under {root}")
        else:
            logger.info(f"✓ Found {len(entries)} annotated recordings under {root} ({split})")
        return DatasetManifest(root=root, split=split, entries=entries, orphans=orphans)

    def parse_annotations(
        self,
        source: Union[str, Path, io.StringIO],
        query_class: Optional[str] = None,
    ) -> AnnotationTable:
        """
        Parse an annotation CSV

        Args:
            source: CSV path or text buffer
            query_class: name given to a lone `Q` column (validation tables)

        Returns:
            AnnotationTable; rows with Endtime <= Starttime are dropped and logged
        """
        name = str(source) if not isinstance(source, io.StringIO) else "<annotations>"
        try:
            frame = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise AnnotationError(f"{name}: {e}") from e

        frame.columns = [column.strip() for column in frame.columns]
        missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
        if missing:
            raise AnnotationError(f"{name}: missing columns {missing}", line=1)
        class_columns = [column for column in frame.columns if column not in REQUIRED_COLUMNS]
        if not class_columns:
            raise AnnotationError(f"{name}: no class columns", line=1)
        renamed = {
            column: (query_class if column == QUERY_COLUMN and query_class else column)
            for column in class_columns
        }

        rows: List[AnnotationRow] = []
        rejected = 0
        for index, record in enumerate(frame.itertuples(index=False), start=2):
            values = dict(zip(frame.columns, record))
            try:
                start = float(values["Starttime"])
                end = float(values["Endtime"])
            except ValueError:
                raise AnnotationError(
                    f"{name}: non-numeric time {values['Starttime']!r} / {values['Endtime']!r}", line=index
                ) from None

            labels = {}
            for column in class_columns:
                cell = str(values[column]).strip().upper()
                if cell not in Label.__members__:
                    raise AnnotationError(f"{name}: unknown label {values[column]!r} in column {column}", line=index)
                labels[renamed[column]] = Label(cell)

            if end <= start:
                logger.warning(f"{name} line {index}: Endtime {end} <= Starttime {start}, row rejected")
                rejected += 1
                continue
            try:
                rows.append(
                    AnnotationRow(
                        audiofilename=str(values["Audiofilename"]).strip(),
                        starttime=start,
                        endtime=end,
                        labels=labels,
                    )
                )
            except ValidationError as e:
                raise AnnotationError(f"{name}: {e.errors()[0]['msg']}", line=index) from e

        return AnnotationTable(source=name, classes=[renamed[c] for c in class_columns], rows=rows, rejected=rejected)

    def serialize_annotations(self, table: AnnotationTable, query_column: bool = False) -> str:
        """CSV text that parses back to `table`"""
        columns = [QUERY_COLUMN] if query_column and len(table.classes) == 1 else table.classes
        records = [
            [row.audiofilename, repr(row.starttime), repr(row.endtime)]
            + [row.labels[name].value for name in table.classes]
            for row in table.rows
        ]
        frame = pd.DataFrame(records, columns=[*REQUIRED_COLUMNS, *columns])
        return frame.to_csv(index=False, lineterminator="\n")

    def load_tables(self, manifest: DatasetManifest) -> Dict[str, AnnotationTable]:
        """Annotation table per file_id; a lone `Q` column takes its folder's name"""
        return {
            entry.file_id: self.parse_annotations(entry.annotation_path, query_class=entry.wav_path.parent.name)
            for entry in manifest.entries
        }

    def build_corpus(self, manifest: DatasetManifest, tables: Dict[str, AnnotationTable]) -> EpisodeCorpus:
        """
        Per-class pools of positive segments and POS/UNK-free regions.

        Intervals are clipped to the recording; duplicates are dropped.
        """
        pools: Dict[str, ClassPool] = {}
        durations = {entry.file_id: entry.duration for entry in manifest.entries}
        for entry in manifest.entries:
            table = tables[entry.file_id]
            for class_name in table.classes:
                pool = pools.setdefault(class_name, ClassPool(class_id=class_name))
                seen = set()
                for onset, offset in table.positives(class_name):
                    offset = min(offset, entry.duration)
                    if onset >= offset or (onset, offset) in seen:
                        continue
                    seen.add((onset, offset))
                    pool.positives.append(
                        Segment(file_id=entry.file_id, onset=onset, offset=offset, class_id=class_name)
                    )
                for start, end in free_intervals(table.excluded(class_name), 0.0, entry.duration):
                    pool.free.append((entry.file_id, start, end))

        corpus = EpisodeCorpus(pools=pools, durations=durations)
        logger.info(
            f"Episode corpus: {len(pools)} classes, "
            f"{sum(len(p.positives) for p in pools.values())} positive segments"
        )
        return corpus


dataset_service = DatasetService()
