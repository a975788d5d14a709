"""
TCP and UDP plumbing for shard services and their clients.

TCP carries any number of frames per connection. UDP carries exactly one
frame per datagram; replies that would not fit are answered with a
FrameTooLarge error so the client falls back to TCP.
"""

import asyncio
import logging
from typing import Callable, Dict, Optional, Tuple

from ..config import settings
from ..errors import ProtocolError, ReasonCode, ZefError
from .wire import LENGTH_PREFIX, ErrorReply, WireMessage, decode_body, decode_frame, encode_body, encode_frame, read_frame

logger = logging.getLogger(__name__)

BodyHandler = Callable[[bytes], bytes]


def _framed(body: bytes) -> bytes:
    return len(body).to_bytes(LENGTH_PREFIX, "little") + body


# ============================================================================
# SERVERS
# ============================================================================

async def start_tcp_server(handler: BodyHandler, host: str, port: int, label: str = "") -> asyncio.AbstractServer:
    """Serve framed requests; one reply frame per request frame, in order."""

    async def on_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        try:
            while True:
                try:
                    body = await read_frame(reader)
                except ZefError as e:
                    writer.write(encode_frame(ErrorReply.from_error(e)))
                    await writer.drain()
                    logger.warning(f"{label}: dropping connection from {peer}: {e}")
                    return
                if body is None:
                    return
                writer.write(_framed(handler(body)))
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError) as e:
            logger.debug(f"{label}: connection from {peer} ended: {e}")
        finally:
            writer.close()

    server = await asyncio.start_server(on_connection, host, port)
    bound = server.sockets[0].getsockname() if server.sockets else (host, port)
    logger.info(f"{label}: TCP listening on {bound[0]}:{bound[1]}")
    return server


class ShardDatagramProtocol(asyncio.DatagramProtocol):
    """One datagram in, one datagram out."""

    def __init__(self, handler: BodyHandler, label: str = ""):
        self.handler = handler
        self.label = label
        self.transport: Optional[asyncio.DatagramTransport] = None

    def connection_made(self, transport: asyncio.BaseTransport) -> None:
        self.transport = transport  # type: ignore[assignment]

    def datagram_received(self, data: bytes, addr: Tuple[str, int]) -> None:
        try:
            if len(data) < LENGTH_PREFIX or int.from_bytes(data[:LENGTH_PREFIX], "little") != len(data) - LENGTH_PREFIX:
                raise ProtocolError(ReasonCode.PARSE_FAILURE, "datagram is not exactly one frame")
            reply = _framed(self.handler(data[LENGTH_PREFIX:]))
        except ZefError as e:
            reply = encode_frame(ErrorReply.from_error(e))
        if len(reply) > settings.udp_max_frame_bytes:
            reply = encode_frame(ErrorReply(ReasonCode.FRAME_TOO_LARGE, "reply too large for UDP, use TCP"))
        if self.transport is not None:
            self.transport.sendto(reply, addr)


async def start_udp_server(handler: BodyHandler, host: str, port: int, label: str = "") -> asyncio.DatagramTransport:
    loop = asyncio.get_running_loop()
    transport, _ = await loop.create_datagram_endpoint(
        lambda: ShardDatagramProtocol(handler, label), local_addr=(host, port)
    )
    logger.info(f"{label}: UDP listening on {host}:{port}")
    return transport  # type: ignore[return-value]


# ============================================================================
# CLIENTS
# ============================================================================

async def send_message(host: str, port: int, message: WireMessage, timeout: Optional[float] = None) -> WireMessage:
    """One-shot request over a fresh TCP connection."""
    timeout = timeout or settings.request_timeout_seconds

    async def exchange() -> WireMessage:
        reader, writer = await asyncio.open_connection(host, port)
        try:
            writer.write(encode_frame(message))
            await writer.drain()
            body = await read_frame(reader)
            if body is None:
                raise ConnectionResetError(f"{host}:{port} closed without answering")
            return decode_body(body)
        finally:
            writer.close()

    return await asyncio.wait_for(exchange(), timeout)


class TcpConnectionPool:
    """One persistent connection per endpoint; requests on a connection are serialized."""

    def __init__(self, timeout: Optional[float] = None):
        self.timeout = timeout or settings.request_timeout_seconds
        self._connections: Dict[Tuple[str, int], Tuple[asyncio.StreamReader, asyncio.StreamWriter]] = {}
        self._locks: Dict[Tuple[str, int], asyncio.Lock] = {}

    async def request(self, host: str, port: int, message: WireMessage) -> WireMessage:
        key = (host, port)
        lock = self._locks.setdefault(key, asyncio.Lock())
        async with lock:
            try:
                return await asyncio.wait_for(self._exchange(key, message), self.timeout)
            except (OSError, asyncio.TimeoutError, asyncio.IncompleteReadError, ZefError):
                self._drop(key)
                raise

    async def _exchange(self, key: Tuple[str, int], message: WireMessage) -> WireMessage:
        if key not in self._connections:
            self._connections[key] = await asyncio.open_connection(*key)
        reader, writer = self._connections[key]
        writer.write(encode_frame(message))
        await writer.drain()
        body = await read_frame(reader)
        if body is None:
            raise ConnectionResetError(f"{key[0]}:{key[1]} closed the connection")
        return decode_body(body)

    def _drop(self, key: Tuple[str, int]) -> None:
        conn = self._connections.pop(key, None)
        if conn is not None:
            conn[1].close()

    async def close(self) -> None:
        for key in list(self._connections):
            self._drop(key)


class _DatagramClient(asyncio.DatagramProtocol):
    def __init__(self) -> None:
        self.reply: asyncio.Future = asyncio.get_running_loop().create_future()

    def datagram_received(self, data: bytes, addr: Tuple[str, int]) -> None:
        if not self.reply.done():
            self.reply.set_result(data)

    def error_received(self, exc: Exception) -> None:
        if not self.reply.done():
            self.reply.set_exception(exc)


async def send_datagram(host: str, port: int, message: WireMessage, timeout: Optional[float] = None) -> WireMessage:
    """
    One request, one reply over UDP.

    Raises:
        ProtocolError(FrameTooLarge): the request does not fit in one datagram
    """
    frame = encode_frame(message)
    if len(frame) > settings.udp_max_frame_bytes:
        raise ProtocolError(ReasonCode.FRAME_TOO_LARGE, f"{len(frame)} bytes do not fit a datagram")
    loop = asyncio.get_running_loop()
    transport, protocol = await loop.create_datagram_endpoint(_DatagramClient, remote_addr=(host, port))
    try:
        transport.sendto(frame)
        data = await asyncio.wait_for(protocol.reply, timeout or settings.request_timeout_seconds)
        return decode_frame(data)
    finally:
        transport.close()
