import os
from pathlib import Path
from typing import Callable, List, Tuple

from loguru import logger

from protosed.core.errors import InputError, ProtoSEDError

Check = Tuple[str, Callable[[], str]]


def require_dir(path, what: str) -> Callable[[], str]:
    def _check() -> str:
        if not path:
            raise InputError(f"no {what} given")
        if not Path(path).is_dir():
            raise InputError(f"{what} not found: {path}")
        return f"{what}: {path}"

    return _check


def require_file(path, what: str) -> Callable[[], str]:
    def _check() -> str:
        if not path or not Path(path).is_file():
            raise InputError(f"{what} not found: {path}")
        return f"{what}: {path}"

    return _check


def require_writable(path, what: str) -> Callable[[], str]:
    def _check() -> str:
        directory = Path(path)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise InputError(f"cannot create {what} {directory}: {e}") from e
        if not os.access(directory, os.W_OK):
            raise InputError(f"{what} is not writable: {directory}")
        return f"{what}: {directory}"

    return _check


def startup_checks(command: str, checks: List[Check]) -> bool:
    """
    Run numbered pre-flight checks for a subcommand

    Returns:
        bool: True if all checks pass, False otherwise
    """
    logger.info("=" * 60)
    logger.info(f"Starting protosed {command}")
    logger.info("=" * 60)

    all_checks_passed = True
    for number, (label, check) in enumerate(checks, start=1):
        logger.info(f"[{number}/{len(checks)}] Checking {label}...")
        try:
            logger.info(f"✓ {check()}")
        except ProtoSEDError as e:
            logger.error(f"✗ {e}")
            all_checks_passed = False

    if all_checks_passed:
        logger.info("✓ All startup checks passed")
    else:
        logger.error("✗ Some startup checks failed")
    logger.info("=" * 60)
    return all_checks_passed
