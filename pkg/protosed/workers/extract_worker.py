"""
Extract Worker - per-file feature extraction on a bounded thread pool
"""

from typing import Callable, Dict, List, TypeVar

import anyio
from anyio import CapacityLimiter, to_thread
from loguru import logger

from protosed.models.annotations import ManifestEntry

T = TypeVar("T")


class ExtractWorker:
    """Runs a per-file job over manifest entries with at most `workers` in flight"""

    def __init__(self, workers: int = 4):
        self.workers = max(1, workers)

    async def _run_all(self, entries: List[ManifestEntry], job: Callable[[ManifestEntry], T]) -> Dict[str, T]:
        limiter = CapacityLimiter(self.workers)
        results: Dict[str, T] = {}

        async def _one(entry: ManifestEntry):
            results[entry.file_id] = await to_thread.run_sync(job, entry, limiter=limiter)

        async with anyio.create_task_group() as tg:
            for entry in entries:
                tg.start_soon(_one, entry)
        return results

    def run(self, entries: List[ManifestEntry], job: Callable[[ManifestEntry], T]) -> Dict[str, T]:
        """
        Apply `job` to every entry

        Returns:
            file_id -> result, in manifest order regardless of completion order
        """
        if not entries:
            return {}
        logger.info(f"Processing {len(entries)} files with {self.workers} workers")
        try:
            results = anyio.run(self._run_all, entries, job)
        except BaseExceptionGroup as group:
            # surface the first failure unwrapped
            raise group.exceptions[0] from None
        return {entry.file_id: results[entry.file_id] for entry in entries}
