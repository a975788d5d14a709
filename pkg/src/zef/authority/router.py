"""
Cross-shard delivery inside one authority.

Shards hosted in this process get an in-memory queue each (exactly once).
Shards in other processes get CrossShard frames over TCP, retried with
backoff until an Ack comes back; the receiving engine drops duplicates by
origin digest, so at-least-once is enough.
"""

import asyncio
import logging
from collections import deque
from typing import Deque, Dict, Optional, Set

from ..config import settings
from ..core.committee import CommitteeConfig
from ..engine.state import CrossShardMessage
from .net import send_message
from .shard import ShardService
from .wire import Ack, ErrorReply

logger = logging.getLogger(__name__)


class CrossShardRouter:
    """Routes effects of confirmed operations to the shard owning the target account."""

    def __init__(self, cfg: CommitteeConfig, authority: str):
        self.cfg = cfg
        self.authority = authority
        self.local: Dict[int, ShardService] = {}
        self._queues: Dict[int, Deque[CrossShardMessage]] = {}
        self._remote_backlog: Deque[CrossShardMessage] = deque()
        self._wakeup: Optional[asyncio.Event] = None
        self._tasks: Set[asyncio.Task] = set()
        self.delivered = 0
        self.retries = 0

    def register(self, service: ShardService) -> None:
        self.local[service.shard] = service
        self._queues[service.shard] = deque()
        service.route = self.route

    # ------------------------------------------------------------------
    # routing
    # ------------------------------------------------------------------

    def route(self, msg: CrossShardMessage) -> None:
        """Queue `msg` for its target shard. Never blocks."""
        shard = self.cfg.shard_of(msg.target)
        if shard in self.local:
            self._queues[shard].append(msg)
            if self._wakeup is not None:
                self._wakeup.set()
            return
        self._remote_backlog.append(msg)
        if self._wakeup is not None:
            self._spawn_remote_sends()

    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values()) + len(self._remote_backlog)

    def drain(self) -> int:
        """Deliver every queued local message synchronously. Returns the count."""
        count = 0
        while True:
            batch = [(shard, queue.popleft()) for shard, queue in self._queues.items() if queue]
            if not batch:
                return count
            for shard, msg in batch:
                self._deliver_local(shard, msg)
                count += 1

    def _deliver_local(self, shard: int, msg: CrossShardMessage) -> None:
        reply = self.local[shard].handle(msg)
        if isinstance(reply, ErrorReply):
            logger.error(f"{self.authority}: shard {shard} refused cross-shard message: {reply.message}")
        self.delivered += 1

    # ------------------------------------------------------------------
    # async delivery
    # ------------------------------------------------------------------

    async def run(self) -> None:
        """Consume local queues until cancelled; ship remote backlog as it appears."""
        self._wakeup = asyncio.Event()
        self._spawn_remote_sends()
        logger.info(f"{self.authority}: cross-shard router running for shards {sorted(self.local)}")
        try:
            while True:
                await self._wakeup.wait()
                self._wakeup.clear()
                self.drain()
        finally:
            for task in list(self._tasks):
                task.cancel()

    def _spawn_remote_sends(self) -> None:
        while self._remote_backlog:
            msg = self._remote_backlog.popleft()
            task = asyncio.get_running_loop().create_task(self._send_remote(msg))
            self._tasks.add(task)
            task.add_done_callback(self._tasks.discard)

    async def _send_remote(self, msg: CrossShardMessage) -> None:
        shard = self.cfg.shard_of(msg.target)
        endpoint = self.cfg.endpoint(self.authority, shard)
        delay = settings.cross_shard_retry_seconds
        while True:
            try:
                reply = await send_message(endpoint.host, endpoint.tcp_port, msg, settings.request_timeout_seconds)
                if isinstance(reply, Ack):
                    self.delivered += 1
                    return
                logger.error(f"{self.authority}: shard {shard} answered {type(reply).__name__} to cross-shard message")
            except (OSError, asyncio.TimeoutError) as e:
                logger.debug(f"{self.authority}: shard {shard} unreachable ({e}), retrying in {delay:.2f}s")
            self.retries += 1
            await asyncio.sleep(delay)
            delay = min(delay * 2, settings.cross_shard_max_backoff_seconds)

    def get_stats(self) -> dict:
        return {
            "local_shards": sorted(self.local),
            "queued": self.pending(),
            "in_flight": len(self._tasks),
            "delivered": self.delivered,
            "retries": self.retries,
        }

