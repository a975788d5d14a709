"""
Broadcast one message to every authority and wait for enough good answers.

Each authority gets its own task that retries transport failures with
exponential backoff. A judge callback decides per reply whether it counts
(ACCEPT), is final (REJECT) or should be asked again (RETRY). Votes that do
not verify are rejected by the judge, so they never count toward a quorum.
"""

import asyncio
import logging
import time
import uuid
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Awaitable, Callable, Dict, Iterable, Optional, Tuple

from ..authority.wire import ErrorReply, WireMessage
from ..config import settings
from ..core.committee import CommitteeConfig
from ..errors import ReasonCode, WalletError, ZefError
from ..utils.retry_tracker import BroadcastReport, RetryTracker, get_retry_tracker
from .transport import Transport

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    ACCEPT = "accepted"
    REJECT = "rejected"
    RETRY = "retry"


Judgement = Tuple[Verdict, Any]
Judge = Callable[[str, WireMessage], Awaitable[Judgement]]
MessageFor = Callable[[str], WireMessage]


@dataclass
class QuorumResult:
    """Accepted values and final rejections per authority."""

    accepted: Dict[str, Any] = field(default_factory=dict)
    rejected: Dict[str, ErrorReply] = field(default_factory=dict)
    unreachable: Dict[str, str] = field(default_factory=dict)
    reached: bool = False
    report: Optional[BroadcastReport] = None

    def dominant_rejection(self) -> Optional[ReasonCode]:
        """Most frequent rejection reason, if any authority rejected."""
        if not self.rejected:
            return None
        return Counter(reply.reason for reply in self.rejected.values()).most_common(1)[0][0]

    def raise_unless_reached(self, cfg: CommitteeConfig, what: str) -> None:
        """
        Raises:
            WalletError: the dominant rejection reason when rejecting
                authorities carry more than f power, NoQuorum otherwise
        """
        if self.reached:
            return
        rejected_power = sum(cfg.power_of(name) for name in self.rejected)
        reason = self.dominant_rejection()
        if reason is not None and rejected_power > cfg.fault_bound:
            sample = next(r for r in self.rejected.values() if r.reason == reason)
            raise WalletError(reason, f"{what}: {sample.message}", expected_sequence=sample.expected_sequence)
        raise WalletError(
            ReasonCode.NO_QUORUM,
            f"{what}: {len(self.accepted)} accepted, {len(self.rejected)} rejected, "
            f"{len(self.unreachable)} unreachable",
        )


class QuorumDriver:
    """
    Fan-out with per-authority retry.

    Args:
        cfg: committee configuration
        transport: how to reach authorities
        tracker: attempt log (shared tracker by default)
        max_retries / backoff_base / backoff_max / timeout: override settings
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        transport: Transport,
        tracker: Optional[RetryTracker] = None,
        max_retries: Optional[int] = None,
        backoff_base: Optional[float] = None,
        backoff_max: Optional[float] = None,
        timeout: Optional[float] = None,
    ):
        self.cfg = cfg
        self.transport = transport
        self.tracker = tracker or get_retry_tracker()
        self.max_retries = settings.max_retries if max_retries is None else max_retries
        self.backoff_base = settings.backoff_base_seconds if backoff_base is None else backoff_base
        self.backoff_max = settings.backoff_max_seconds if backoff_max is None else backoff_max
        self.timeout = settings.request_timeout_seconds if timeout is None else timeout

    def backoff(self, attempt: int) -> float:
        return min(self.backoff_base * (2 ** attempt), self.backoff_max)

    async def broadcast(
        self,
        kind: str,
        shard: int,
        message_for: MessageFor,
        judge: Judge,
        need_power: Optional[int] = None,
        need_count: Optional[int] = None,
        authorities: Optional[Iterable[str]] = None,
        already: Optional[Dict[str, Any]] = None,
        linger: float = 0.0,
    ) -> QuorumResult:
        """
        Send to every authority in `authorities` (all by default) and collect.

        Stops once the accepted set reaches `need_power` voting power (quorum
        by default) or `need_count` authorities. `already` seeds accepted
        values from an earlier round; those authorities are not asked again.
        """
        broadcast_id = f"{kind}-{uuid.uuid4().hex[:8]}"
        self.tracker.start(broadcast_id, kind)
        result = QuorumResult(accepted=dict(already or {}))
        need = self.cfg.quorum_threshold if need_power is None and need_count is None else need_power
        done = asyncio.Event()

        def enough() -> bool:
            if need_count is not None and len(result.accepted) >= need_count:
                return True
            if need is not None and sum(self.cfg.power_of(n) for n in result.accepted) >= need:
                return True
            return False

        async def ask(name: str) -> None:
            attempt = 0
            while True:
                start = time.perf_counter()
                try:
                    reply = await asyncio.wait_for(self.transport.send(name, shard, message_for(name)), self.timeout)
                    verdict, value = await judge(name, reply)
                except (OSError, asyncio.TimeoutError) as e:
                    verdict, value = None, f"{type(e).__name__}: {e}"
                except ZefError as e:
                    verdict, value = Verdict.REJECT, ErrorReply.from_error(e, name)
                latency = (time.perf_counter() - start) * 1000

                if verdict is Verdict.ACCEPT:
                    self.tracker.record(broadcast_id, name, "accepted", latency_ms=latency)
                    result.accepted[name] = value
                    if enough():
                        done.set()
                    return
                if verdict is Verdict.REJECT:
                    reply = value if isinstance(value, ErrorReply) else ErrorReply(ReasonCode.INVALID_VOTE, str(value))
                    self.tracker.record(broadcast_id, name, "rejected", reply.reason.value, latency)
                    result.rejected[name] = reply
                    return
                outcome = "unreachable" if verdict is None else "retry"
                self.tracker.record(broadcast_id, name, outcome, str(value), latency)
                if attempt >= self.max_retries or done.is_set():
                    result.unreachable[name] = str(value)
                    return
                await asyncio.sleep(self.backoff(attempt))
                attempt += 1

        names = [n for n in (authorities or self.cfg.names) if n not in result.accepted]
        if enough():
            done.set()
        tasks = [asyncio.create_task(ask(name)) for name in names]
        waiter = asyncio.create_task(done.wait())
        try:
            pending = set(tasks)
            while pending and not done.is_set():
                _, pending = await asyncio.wait(pending | {waiter}, return_when=asyncio.FIRST_COMPLETED)
                pending.discard(waiter)
            if pending and linger > 0:
                await asyncio.wait(pending, timeout=linger)
        finally:
            waiter.cancel()
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, waiter, return_exceptions=True)

        result.reached = enough()
        result.report = self.tracker.finish(broadcast_id)
        logger.debug(
            f"{kind}: {len(result.accepted)} accepted, {len(result.rejected)} rejected, "
            f"{len(result.unreachable)} unreachable (reached={result.reached})"
        )
        return result
