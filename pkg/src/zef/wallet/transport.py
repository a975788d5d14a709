"""
How a wallet reaches an authority shard.

TcpTransport talks to real authority processes (UDP first when asked to,
falling back to TCP for frames that do not fit a datagram).
InProcessTransport hands frames straight to AuthorityNode objects living in
the same process; tests, the simulator loopback mode and the benchmarks use
it, and it can record every frame sent and crash authorities on demand.
"""

import asyncio
import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List, Optional, Set, Tuple

from ..authority.net import TcpConnectionPool, send_datagram
from ..authority.node import AuthorityNode
from ..authority.wire import ErrorReply, WireMessage, decode_body, encode_body
from ..core.committee import CommitteeConfig
from ..errors import ProtocolError, ReasonCode

logger = logging.getLogger(__name__)


class Transport(ABC):
    """Send one message to one authority's shard and wait for its single reply."""

    @abstractmethod
    async def send(self, authority: str, shard: int, message: WireMessage) -> WireMessage:
        """Raises ConnectionError / asyncio.TimeoutError when the authority cannot be reached."""

    async def close(self) -> None:
        return None


class TcpTransport(Transport):
    """
    Network transport over the committee file's endpoints.

    Args:
        cfg: committee configuration (endpoints per authority and shard)
        protocol: "tcp" or "udp"
        timeout: per-request timeout in seconds
    """

    def __init__(self, cfg: CommitteeConfig, protocol: str = "tcp", timeout: Optional[float] = None):
        if protocol not in ("tcp", "udp"):
            raise ValueError(f"unknown protocol '{protocol}'")
        self.cfg = cfg
        self.protocol = protocol
        self.timeout = timeout
        self.pool = TcpConnectionPool(timeout)

    async def send(self, authority: str, shard: int, message: WireMessage) -> WireMessage:
        endpoint = self.cfg.endpoint(authority, shard)
        if self.protocol == "udp" and endpoint.udp_port is not None:
            try:
                reply = await send_datagram(endpoint.host, endpoint.udp_port, message, self.timeout)
                if not (isinstance(reply, ErrorReply) and reply.reason == ReasonCode.FRAME_TOO_LARGE):
                    return reply
            except ProtocolError as e:
                if e.reason != ReasonCode.FRAME_TOO_LARGE:
                    raise
            logger.debug(f"{authority}/{shard}: frame too large for UDP, using TCP")
        return await self.pool.request(endpoint.host, endpoint.tcp_port, message)

    async def close(self) -> None:
        await self.pool.close()


class InProcessTransport(Transport):
    """
    Delivers to AuthorityNode objects directly, through the wire codec.

    Cross-shard queues are drained after every message so effects land
    before the reply is seen, the way an idle router would deliver them.

    Attributes:
        nodes: authority name -> node
        crashed: authorities that currently drop everything
        frames: (authority, shard, encoded body) of every message sent,
            when recording is on
    """

    def __init__(self, nodes: Iterable[AuthorityNode], record: bool = False):
        self.nodes: Dict[str, AuthorityNode] = {node.name: node for node in nodes}
        self.crashed: Set[str] = set()
        self.record = record
        self.frames: List[Tuple[str, int, bytes]] = []
        self.sent = 0

    def crash(self, authority: str) -> None:
        logger.info(f"Crashing {authority}")
        self.crashed.add(authority)

    def recover(self, authority: str) -> None:
        self.crashed.discard(authority)

    async def send(self, authority: str, shard: int, message: WireMessage) -> WireMessage:
        await asyncio.sleep(0)
        if authority in self.crashed:
            raise ConnectionRefusedError(f"{authority} is down")
        node = self.nodes.get(authority)
        if node is None or shard not in node.services:
            raise ConnectionRefusedError(f"{authority} does not serve shard {shard}")
        body = encode_body(message)
        self.sent += 1
        if self.record:
            self.frames.append((authority, shard, body))
        reply = node.services[shard].handle_body(body)
        node.router.drain()
        return decode_body(reply)
