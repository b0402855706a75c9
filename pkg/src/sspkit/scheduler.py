"""Shard scheduler: runs slices of ranking and training work as asyncio jobs.

Shard functions are synchronous numpy code. Each job runs in the default thread pool, where numpy releases the GIL,
and reads (or, in relaxed training, writes without locks) the shared parameter arrays. All bookkeeping happens on
the event loop thread.
"""

import asyncio
import contextlib
import traceback
from collections.abc import Callable, Sequence
from datetime import datetime, timezone
from typing import Any

import ulid
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from .logging import get_logger
from .schemas import JobRecord, JobStatus

ULID = ulid.ULID

logger = get_logger(__name__)


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _consume(task: asyncio.Task[Any]) -> None:
    # failures are reported through wait() and the job record
    if not task.cancelled():
        task.exception()


class InMemoryScheduler(BaseModel):
    """Job table with at most ``max_concurrency`` jobs running at once, each in a worker thread."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = Field(default="sspkit")
    max_concurrency: int = Field(default=1, ge=1)

    _records: dict[ULID, JobRecord] = PrivateAttr(default_factory=dict)
    _results: dict[ULID, Any] = PrivateAttr(default_factory=dict)
    _tasks: dict[ULID, asyncio.Task[Any]] = PrivateAttr(default_factory=dict)
    _sema: asyncio.Semaphore | None = PrivateAttr(default=None)

    def model_post_init(self, context: Any, /) -> None:
        self._sema = asyncio.Semaphore(self.max_concurrency)

    async def add_job(self, fn: Callable[..., Any], /, *args: Any, label: str | None = None, items: int = 0) -> ULID:
        """Queue ``fn(*args)`` and return its job id; ``items`` records the shard size."""
        jid = ULID()
        self._records[jid] = JobRecord(id=jid, label=label, items=items, submitted_at=_now())
        task = asyncio.create_task(self._run(jid, fn, args), name=f"{self.name}-{label or jid}")
        task.add_done_callback(_consume)
        self._tasks[jid] = task
        return jid

    async def _run(self, jid: ULID, fn: Callable[..., Any], args: tuple[Any, ...]) -> Any:
        assert self._sema is not None
        rec = self._records[jid]
        try:
            async with self._sema:
                rec.status = JobStatus.running
                rec.started_at = _now()
                result = await asyncio.to_thread(fn, *args)
        except asyncio.CancelledError:
            rec.status = JobStatus.canceled
            rec.finished_at = _now()
            raise
        except Exception as exc:
            rec.status = JobStatus.failed
            rec.finished_at = _now()
            rec.error = f"{type(exc).__name__}: {exc}"
            rec.error_traceback = traceback.format_exc()
            raise
        rec.status = JobStatus.completed
        rec.finished_at = _now()
        self._results[jid] = result
        return result

    def _record(self, job_id: ULID) -> JobRecord:
        rec = self._records.get(job_id)
        if rec is None:
            raise KeyError(f"Job {job_id} not found")
        return rec

    async def get_record(self, job_id: ULID) -> JobRecord:
        """Snapshot of a job's record."""
        return self._record(job_id).model_copy(deep=True)

    async def get_status(self, job_id: ULID) -> JobStatus:
        return self._record(job_id).status

    async def records(self) -> list[JobRecord]:
        """Snapshots of all records in submission order."""
        return [rec.model_copy(deep=True) for rec in self._records.values()]

    async def get_result(self, job_id: ULID) -> Any:
        """Return value of a completed job; failed or unfinished jobs raise ``RuntimeError``."""
        rec = self._record(job_id)
        if rec.status == JobStatus.completed:
            return self._results[job_id]
        if rec.status == JobStatus.failed:
            raise RuntimeError(rec.error or "Job failed")
        raise RuntimeError(f"Job not finished (status={rec.status})")

    async def wait(self, job_id: ULID, timeout: float | None = None) -> None:
        """Wait for a job; its exception, if any, is re-raised here."""
        self._record(job_id)
        await asyncio.wait_for(asyncio.shield(self._tasks[job_id]), timeout=timeout)

    async def cancel(self, job_id: ULID) -> bool:
        """Cancel a pending or running job; False if it had already finished."""
        self._record(job_id)
        task = self._tasks[job_id]
        if task.done():
            return False
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task
        rec = self._record(job_id)
        # a task canceled before its first step never reaches _run's handlers
        if rec.status in (JobStatus.pending, JobStatus.running):
            rec.status = JobStatus.canceled
            rec.finished_at = _now()
        return True

    async def gather(self, job_ids: Sequence[ULID]) -> list[Any]:
        """Results of ``job_ids`` in the given order. The first failure cancels the remaining jobs and is re-raised."""
        for jid in job_ids:
            try:
                await self.wait(jid)
            except Exception:
                rec = self._record(jid)
                logger.error("scheduler.job.failed", job_id=str(jid), label=rec.label, error=rec.error)
                for other in job_ids:
                    await self.cancel(other)
                raise
        return [self._results[jid] for jid in job_ids]


def shard[T](items: Sequence[T], n_shards: int) -> list[Sequence[T]]:
    """Split items into at most ``n_shards`` contiguous, non-empty, order-preserving slices."""
    n_shards = max(1, min(n_shards, len(items)))
    bounds = [len(items) * k // n_shards for k in range(n_shards + 1)]
    return [items[bounds[k] : bounds[k + 1]] for k in range(n_shards)]


async def _map_async[T, R](fn: Callable[[Sequence[T]], R], parts: list[Sequence[T]], workers: int) -> list[R]:
    scheduler = InMemoryScheduler(name="sspkit-shards", max_concurrency=workers)
    job_ids = [await scheduler.add_job(fn, part, label=f"shard-{k}", items=len(part)) for k, part in enumerate(parts)]
    return await scheduler.gather(job_ids)


def map_shards[T, R](fn: Callable[[Sequence[T]], R], items: Sequence[T], workers: int) -> list[R]:
    """Apply ``fn`` to contiguous shards of ``items`` concurrently and return results in shard order.

    With ``workers == 1`` the call runs inline without an event loop.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(items)]
    return asyncio.run(_map_async(fn, shard(items, workers), workers))
