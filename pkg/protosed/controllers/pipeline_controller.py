"""
Controller for the protosed subcommands
"""

from argparse import Namespace
from pathlib import Path
from typing import Dict, Optional, Tuple

from loguru import logger

from protosed.core.config import RunConfig, feature_hash, resolve_cache_dir
from protosed.core.errors import InputError
from protosed.core.startup import require_dir, require_file, require_writable, startup_checks
from protosed.dsp.features import FeatureStats
from protosed.models.annotations import AnnotationTable, DatasetManifest
from protosed.models.episode import EpisodeCorpus
from protosed.network.mcs_net import MCSNet
from protosed.services.dataset import dataset_service
from protosed.services.detector import FileDetection, detector_service
from protosed.services.evaluator import evaluator_service
from protosed.services.features import FeatureBank, feature_service
from protosed.services.trainer import trainer_service
from protosed.storage.checkpoint import load_checkpoint


def _checks_or_abort(command: str, checks) -> None:
    if not startup_checks(command, checks):
        raise InputError(f"{command}: startup checks failed")


class PipelineController:
    """Controller for the extract / train / detect / grid-search / evaluate / roc commands"""

    @staticmethod
    def _split(
        root: str,
        split: str,
        config: RunConfig,
        cache_dir: Path,
    ) -> Tuple[DatasetManifest, Dict[str, AnnotationTable]]:
        """Scan a dataset root, make sure its features are cached, parse its tables"""
        manifest = dataset_service.scan_dataset(root, split, allow_partial=config.data.allow_partial)
        cache = feature_service.cache_for(cache_dir, config.feature)
        feature_service.extract(manifest, cache, config.feature, workers=config.data.workers)
        return manifest, dataset_service.load_tables(manifest)

    @staticmethod
    def _stats(manifest: DatasetManifest, config: RunConfig, cache_dir: Path) -> FeatureStats:
        cache = feature_service.cache_for(cache_dir, config.feature)
        stats = cache.load_stats()
        if stats is None:
            if manifest.split != "train":
                logger.warning("No training statistics in the cache; standardizing with this split's statistics")
            stats = feature_service.compute_stats(manifest, cache)
            cache.save_stats(stats)
        return stats

    @staticmethod
    def _bank(manifest: DatasetManifest, config: RunConfig, cache_dir: Path, stats: FeatureStats) -> FeatureBank:
        cache = feature_service.cache_for(cache_dir, config.feature)
        return feature_service.load_bank(manifest, cache, config.feature, stats)

    @staticmethod
    def extract(args: Namespace, config: RunConfig) -> int:
        """Cache features for the training and/or validation roots, then corpus stats"""
        cache_dir = resolve_cache_dir(config, args.cache_dir)
        roots = [(r, s) for r, s in ((config.data.train_root, "train"), (config.data.val_root, "val")) if r]
        if not roots:
            raise InputError("extract needs --train-root and/or --val-root (or data.train_root / data.val_root)")
        _checks_or_abort(
            "extract",
            [(f"{split} dataset root", require_dir(root, f"{split} root")) for root, split in roots]
            + [("feature cache", require_writable(cache_dir, "cache directory"))],
        )

        cache = feature_service.cache_for(cache_dir, config.feature)
        manifests = []
        for root, split in roots:
            manifest = dataset_service.scan_dataset(root, split, allow_partial=config.data.allow_partial)
            extracted = feature_service.extract(
                manifest, cache, config.feature, workers=config.data.workers, overwrite=args.overwrite
            )
            manifests.append(manifest)
            print(f"{split}: {len(manifest)} files, {extracted} extracted")

        if args.overwrite or cache.load_stats() is None:
            if manifests[0].split != "train":
                logger.warning("No training root given; corpus statistics come from the validation set")
            cache.save_stats(feature_service.compute_stats(manifests[0], cache))
        print(f"cache: {cache.root}")
        return 0

    @staticmethod
    def train(args: Namespace, config: RunConfig) -> int:
        cache_dir = resolve_cache_dir(config, args.cache_dir)
        out_dir = Path(args.out)
        checks = [
            ("training dataset root", require_dir(config.data.train_root, "train root")),
            ("feature cache", require_writable(cache_dir, "cache directory")),
            ("output directory", require_writable(out_dir, "output directory")),
        ]
        if config.data.val_root:
            checks.insert(1, ("validation dataset root", require_dir(config.data.val_root, "val root")))
        _checks_or_abort("train", checks)

        manifest, tables = PipelineController._split(config.data.train_root, "train", config, cache_dir)
        stats = PipelineController._stats(manifest, config, cache_dir)
        corpus = dataset_service.build_corpus(manifest, tables)
        bank = PipelineController._bank(manifest, config, cache_dir, stats)

        val_corpus: Optional[EpisodeCorpus] = None
        val_bank: Optional[FeatureBank] = None
        if config.data.val_root:
            val_manifest, val_tables = PipelineController._split(config.data.val_root, "val", config, cache_dir)
            val_corpus = dataset_service.build_corpus(val_manifest, val_tables)
            val_bank = PipelineController._bank(val_manifest, config, cache_dir, stats)

        result = trainer_service.train(config, corpus, bank, out_dir, val_corpus, val_bank, stats=stats)
        print(f"best_val_acc = {result.best_val_acc:.4f}")
        print(f"best_epoch = {result.best_epoch}")
        print(f"checkpoint = {result.checkpoint_path}")
        print(f"log = {result.log_path}")
        return 0

    @staticmethod
    def _prepare_detection(args: Namespace, config: RunConfig, command: str):
        cache_dir = resolve_cache_dir(config, args.cache_dir)
        _checks_or_abort(
            command,
            [
                ("checkpoint", require_file(args.checkpoint, "checkpoint")),
                ("validation dataset root", require_dir(config.data.val_root, "val root")),
                ("feature cache", require_writable(cache_dir, "cache directory")),
            ],
        )
        checkpoint = load_checkpoint(args.checkpoint, expected_hash=feature_hash(config), force=args.force)
        net = MCSNet(checkpoint.config.model, n_bins=checkpoint.n_bins)
        net.params.load_state(checkpoint.state)

        manifest, tables = PipelineController._split(config.data.val_root, "val", config, cache_dir)
        stats = checkpoint.stats or PipelineController._stats(manifest, config, cache_dir)
        bank = PipelineController._bank(manifest, config, cache_dir, stats)
        prepared = detector_service.prepare(
            tables,
            bank,
            net,
            config.detector,
            seed=config.seed,
            squared=checkpoint.config.trainer.distance == "squared",
        )
        return prepared

    @staticmethod
    def detect(args: Namespace, config: RunConfig) -> int:
        prepared: list[FileDetection] = PipelineController._prepare_detection(args, config, "detect")
        events = detector_service.detect(prepared, config.detector)
        path = detector_service.write_detections(events, Path(args.out))
        print(f"detections = {path} ({len(events)} events)")
        return 0

    @staticmethod
    def grid_search(args: Namespace, config: RunConfig) -> int:
        prepared = PipelineController._prepare_detection(args, config, "grid-search")
        result = detector_service.grid_search(prepared, config.detector, config.evaluator)
        out = Path(args.out)
        detector_service.write_grid(result, out)
        gt_path = detector_service.write_ground_truth(prepared, out.with_name(f"{out.stem}_ground_truth.csv"))

        best = result.best
        events = []
        for item in prepared:
            events.extend(
                detector_service.detect_file(item, best.alpha, best.beta, best.threshold, config.detector.merge_gap_frames)
            )
        det_path = detector_service.write_detections(events, out.with_name(f"{out.stem}_best_detections.csv"))

        print(f"operating_points = {len(result.points)}")
        print(f"best_alpha = {best.alpha}")
        print(f"best_threshold = {best.threshold}")
        print(f"grid = {out}")
        print(f"ground_truth = {gt_path}")
        print(f"detections = {det_path}")
        print(f"F-measure: {best.f_measure:.2f}")
        return 0

    @staticmethod
    def evaluate(args: Namespace, config: RunConfig) -> int:
        _checks_or_abort(
            "evaluate",
            [
                ("detections", require_file(args.det, "detection CSV")),
                ("ground truth", require_file(args.gt, "ground-truth CSV")),
            ],
        )
        detections = evaluator_service.read_detections(Path(args.det))
        ground_truth = evaluator_service.read_ground_truth(Path(args.gt), hours=args.hours)
        result = evaluator_service.evaluate(detections, ground_truth, config.evaluator)

        report_path = Path(args.report) if args.report else Path(args.det).with_name(f"{Path(args.det).stem}_report.txt")
        evaluator_service.write_report(
            {
                "f_measure": f"{result.f_measure:.2f}",
                "precision": f"{result.precision:.2f}",
                "recall": f"{result.recall:.2f}",
                "tp": result.counts.tp,
                "fp": result.counts.fp,
                "fn": result.counts.fn,
                "dtc": config.evaluator.dtc,
                "gtc": config.evaluator.gtc,
            },
            report_path,
        )
        print(f"Precision: {result.precision:.2f}")
        print(f"Recall: {result.recall:.2f}")
        print(f"F-measure: {result.f_measure:.2f}")
        return 0

    @staticmethod
    def roc(args: Namespace, config: RunConfig) -> int:
        _checks_or_abort("roc", [("grid table", require_file(args.grid, "grid table"))])
        points = detector_service.read_grid(Path(args.grid))
        report = evaluator_service.build_report(points, config.evaluator)
        out = evaluator_service.emit_roc(report, Path(args.out))
        evaluator_service.write_report(
            {
                "psds": f"{report.psds:.6f}",
                "f_measure": f"{report.f_measure:.2f}",
                "precision": f"{report.precision:.2f}",
                "recall": f"{report.recall:.2f}",
                "alpha": report.alpha,
                "threshold": report.threshold,
                "e_max": config.evaluator.e_max,
                "alpha_st": config.evaluator.alpha_st,
            },
            out.with_name(f"{out.stem}_report.txt"),
        )
        print(f"PSDS: {report.psds:.4f}")
        print(f"F-measure: {report.f_measure:.2f}")
        return 0
