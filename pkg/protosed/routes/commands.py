"""
Subcommand registration for the protosed command line
"""

import argparse
from typing import Any, Dict

from protosed.controllers.pipeline_controller import PipelineController
from protosed.core.errors import UsageError


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting with status 2"""

    def error(self, message: str):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat `section.key = value` config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
    parser.add_argument("--seed", type=int, help="seed for every random choice")
    parser.add_argument("--cache-dir", help="feature cache directory")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")


def _data(parser: argparse.ArgumentParser, train: bool = True, val: bool = True):
    if train:
        parser.add_argument("--train-root", help="training dataset folder")
    if val:
        parser.add_argument("--val-root", help="validation dataset folder")
    parser.add_argument("--allow-partial", action="store_true", help="skip unpaired wav/csv files")
    parser.add_argument("--resample", action="store_true", help="resample audio not at the configured rate")
    parser.add_argument("--workers", type=int, help="parallel extraction workers")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="protosed", description="Few-shot bioacoustic sound event detection")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    commands.required = True

    extract = commands.add_parser("extract", help="compute and cache feature maps")
    _common(extract)
    _data(extract)
    extract.add_argument("--overwrite", action="store_true", help="recompute cached files")
    extract.set_defaults(handler=PipelineController.extract)

    train = commands.add_parser("train", help="episodic training")
    _common(train)
    _data(train)
    train.add_argument("--out", default="runs", help="directory for the checkpoint and training log")
    train.set_defaults(handler=PipelineController.train)

    for name, handler, default_out, help_text in (
        ("detect", PipelineController.detect, "detections.csv", "detect events with the configured post-filter"),
        ("grid-search", PipelineController.grid_search, "grid.csv", "search the (alpha, threshold) grid"),
    ):
        command = commands.add_parser(name, help=help_text)
        _common(command)
        _data(command, train=False)
        command.add_argument("--checkpoint", required=True, help="trained model checkpoint")
        command.add_argument("--force", action="store_true", help="load a checkpoint built with other feature settings")
        command.add_argument("--out", default=default_out, help="output CSV")
        command.set_defaults(handler=handler)

    evaluate = commands.add_parser("evaluate", help="event-based precision / recall / F-measure")
    _common(evaluate)
    evaluate.add_argument("--det", required=True, help="detection CSV")
    evaluate.add_argument("--gt", required=True, help="ground-truth CSV")
    evaluate.add_argument("--hours", type=float, help="evaluated audio in hours")
    evaluate.add_argument("--report", help="report file (default: next to the detections)")
    evaluate.set_defaults(handler=PipelineController.evaluate)

    roc = commands.add_parser("roc", help="PSD-ROC and PSDS from a grid table")
    _common(roc)
    roc.add_argument("--grid", required=True, help="grid table written by grid-search")
    roc.add_argument("--out", default="roc.csv", help="ROC CSV")
    roc.set_defaults(handler=PipelineController.roc)
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dedicated flags as config keys; unset flags are left out"""
    flags = {
        "seed": getattr(args, "seed", None),
        "data.cache_dir": getattr(args, "cache_dir", None),
        "data.train_root": getattr(args, "train_root", None),
        "data.val_root": getattr(args, "val_root", None),
        "data.workers": getattr(args, "workers", None),
        "data.allow_partial": True if getattr(args, "allow_partial", False) else None,
        "feature.resample": True if getattr(args, "resample", False) else None,
    }
    return {key: value for key, value in flags.items() if value is not None}
