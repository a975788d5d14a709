"""
Deterministic network for the simulator.

Time is a logical counter. Every frame becomes an Envelope scheduled at
now + delay; the queue pops in (time, sequence) order, so a seed and a
fault plan fix the whole run. Drops, duplicates and delays are drawn from
one seeded random.Random.
"""

import heapq
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from ..core.encoding import hash_bytes

logger = logging.getLogger(__name__)

# ("client", client_name) or (authority_name, shard)
Endpoint = Tuple[str, Any]


def client_endpoint(name: str) -> Endpoint:
    return ("client", name)


def is_client(endpoint: Endpoint) -> bool:
    return endpoint[0] == "client"


class Partition(BaseModel):
    """Authorities cut off from every client during [start, end)."""

    authorities: List[str]
    start: int = Field(ge=0)
    end: int = Field(ge=0)

    def cuts(self, authority: str, time: int) -> bool:
        return authority in self.authorities and self.start <= time < self.end


class FaultPlan(BaseModel):
    """
    What the network does to frames.

    Client links can drop, duplicate and delay. Cross-shard links inside an
    authority are retried by the router until acknowledged, so they only
    duplicate and delay.
    """

    drop_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    duplicate_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    max_delay: int = Field(default=1, ge=1)
    cross_shard_duplicate_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    crashes: Dict[str, int] = Field(default_factory=dict, description="authority -> crash time")
    partitions: List[Partition] = Field(default_factory=list)

    def crashed(self, authority: str, time: int) -> bool:
        at = self.crashes.get(authority)
        return at is not None and time >= at

    def cut(self, authority: str, time: int) -> bool:
        return any(p.cuts(authority, time) for p in self.partitions)


@dataclass(order=True)
class Envelope:
    time: int
    seq: int
    src: Endpoint = field(compare=False)
    dst: Endpoint = field(compare=False)
    body: bytes = field(compare=False)
    ref: int = field(default=0, compare=False)
    internal: bool = field(default=False, compare=False)

    @property
    def digest(self) -> str:
        return hash_bytes(b"zef/sim-frame", self.body).hex()[:16]


@dataclass
class TraceEvent:
    """One thing the network did."""

    step: int
    time: int
    action: str  # deliver / drop / duplicate / crashed / partitioned
    src: str
    dst: str
    tag: int
    frame: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "time": self.time,
            "action": self.action,
            "src": self.src,
            "dst": self.dst,
            "tag": self.tag,
            "frame": self.frame,
        }

    def line(self, with_frame: bool = True) -> str:
        head = f"{self.step}|{self.time}|{self.action}|{self.src}|{self.dst}|{self.tag}"
        return f"{head}|{self.frame}" if with_frame else head


def endpoint_label(endpoint: Endpoint) -> str:
    if is_client(endpoint):
        return f"client:{endpoint[1]}"
    return f"{endpoint[0]}/{endpoint[1]}"


Handler = Callable[[Envelope], None]


class SimNetwork:
    """
    Seeded event queue plus fault injection.

    Args:
        plan: the faults to apply
        seed: seeds every random draw

    Setting `reliable` turns off drops, duplicates, partitions and random
    delays (crashes still apply); the dissemination phase runs that way.
    """

    def __init__(self, plan: FaultPlan, seed: int):
        self.plan = plan
        self.rng = random.Random(seed)
        self.now = 0
        self.steps = 0
        self.reliable = False
        self._seq = 0
        self._queue: List[Envelope] = []
        self._timers: List[Tuple[int, int, Callable[[], None]]] = []
        self._handlers: Dict[Endpoint, Handler] = {}
        self.events: List[TraceEvent] = []
        self.delivered = 0
        self.dropped = 0

    def register(self, endpoint: Endpoint, handler: Handler) -> None:
        self._handlers[endpoint] = handler

    # ------------------------------------------------------------------
    # sending
    # ------------------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _delay(self) -> int:
        if self.reliable:
            return 1
        return self.rng.randint(1, self.plan.max_delay)

    def _record(self, action: str, envelope: Envelope) -> None:
        self.events.append(
            TraceEvent(
                step=self.steps,
                time=self.now,
                action=action,
                src=endpoint_label(envelope.src),
                dst=endpoint_label(envelope.dst),
                tag=envelope.body[0] if envelope.body else -1,
                frame=envelope.digest,
            )
        )

    def send(self, src: Endpoint, dst: Endpoint, body: bytes, ref: int = 0, internal: bool = False) -> None:
        """Schedule a frame, applying drop/duplicate draws for its link."""
        envelope = Envelope(self.now + self._delay(), self._next_seq(), src, dst, body, ref, internal)
        if not self.reliable:
            if not internal and self.plan.drop_rate and self.rng.random() < self.plan.drop_rate:
                self.dropped += 1
                self._record("drop", envelope)
                return
            rate = self.plan.cross_shard_duplicate_rate if internal else self.plan.duplicate_rate
            if rate and self.rng.random() < rate:
                copy = Envelope(self.now + self._delay(), self._next_seq(), src, dst, body, ref, internal)
                self._record("duplicate", copy)
                heapq.heappush(self._queue, copy)
        heapq.heappush(self._queue, envelope)

    def set_timer(self, delay: int, callback: Callable[[], None]) -> None:
        heapq.heappush(self._timers, (self.now + max(1, delay), self._next_seq(), callback))

    # ------------------------------------------------------------------
    # running
    # ------------------------------------------------------------------

    def _blocked(self, envelope: Envelope) -> Optional[str]:
        for endpoint in (envelope.src, envelope.dst):
            if is_client(endpoint):
                continue
            if self.plan.crashed(endpoint[0], envelope.time):
                return "crashed"
            if not self.reliable and not envelope.internal and self.plan.cut(endpoint[0], envelope.time):
                return "partitioned"
        return None

    def idle(self) -> bool:
        return not self._queue and not self._timers

    def step(self) -> bool:
        """Run the earliest frame or timer. False once nothing is left."""
        next_frame = self._queue[0].time if self._queue else None
        next_timer = self._timers[0][0] if self._timers else None
        if next_frame is None and next_timer is None:
            return False
        self.steps += 1
        if next_timer is not None and (next_frame is None or next_timer < next_frame):
            time, _, callback = heapq.heappop(self._timers)
            self.now = max(self.now, time)
            callback()
            return True

        envelope = heapq.heappop(self._queue)
        self.now = max(self.now, envelope.time)
        blocked = self._blocked(envelope)
        if blocked is not None:
            self.dropped += 1
            self._record(blocked, envelope)
            return True
        handler = self._handlers.get(envelope.dst)
        if handler is None:
            logger.debug(f"No endpoint {endpoint_label(envelope.dst)}, frame discarded")
            return True
        self._record("deliver", envelope)
        self.delivered += 1
        handler(envelope)
        return True

    def run(self, max_steps: int) -> bool:
        """Step until idle. Returns False if max_steps ran out first."""
        while self.steps < max_steps:
            if not self.step():
                return True
        logger.warning(f"Network still busy after {max_steps} steps")
        return False

    def trace_digest(self, include_frames: bool = True) -> str:
        """
        Hash of the event log. Coin bundles carry fresh blinding randomness,
        so runs that mint coins compare schedules only (include_frames=False).
        """
        lines = "\n".join(e.line(include_frames) for e in self.events)
        return hash_bytes(b"zef/sim-trace", lines.encode()).hex()
