"""
Wire framing between wallets, authorities and shards.

    frame = u32 little-endian length | tag byte | canonical payload

The length covers tag + payload. Unknown tags and oversized frames are
rejected before any payload parsing.
"""

import asyncio
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, Optional, Tuple, Type, Union

from ..coins.coconut import BlindedShare
from ..coins.opaque import CreateAnonymousCoins
from ..coins.transparent import CreateTransparentCoins
from ..config import settings
from ..core.encoding import Reader, Writer, decode_exact
from ..core.messages import (
    AccountInfoQuery,
    AccountInfoResponse,
    AuthenticatedRequest,
    Certificate,
    Vote,
)
from ..core.uid import UID
from ..engine.state import CrossShardMessage
from ..errors import ProtocolError, ReasonCode, ZefError

LENGTH_PREFIX = 4


class Tag(IntEnum):
    REQUEST = 1
    VOTE = 2
    CONFIRM = 3
    CREATE_ANONYMOUS_COINS = 4
    CREATE_TRANSPARENT_COINS = 5
    COIN_SHARES = 6
    ACCOUNT_INFO_QUERY = 7
    ACCOUNT_INFO_RESPONSE = 8
    CROSS_SHARD = 9
    ERROR = 10
    ACK = 11
    COIN_VOTES = 12


@dataclass(frozen=True)
class CoinShares:
    """One authority's blinded shares, one per output, in output order."""

    authority: str
    shares: Tuple[BlindedShare, ...]

    def encode(self, w: Writer) -> None:
        w.text(self.authority)
        w.seq(self.shares, lambda w, s: s.encode(w))

    @classmethod
    def decode(cls, r: Reader) -> "CoinShares":
        return cls(r.text(), tuple(r.seq(BlindedShare.decode)))


@dataclass(frozen=True)
class CoinVotes:
    """One authority's votes on transparent outputs, in output order."""

    authority: str
    votes: Tuple[Vote, ...]

    def encode(self, w: Writer) -> None:
        w.text(self.authority)
        w.seq(self.votes, lambda w, v: v.encode(w))

    @classmethod
    def decode(cls, r: Reader) -> "CoinVotes":
        return cls(r.text(), tuple(r.seq(Vote.decode)))


@dataclass(frozen=True)
class Ack:
    """Confirmation or cross-shard delivery accepted; carries the account summary."""

    account_id: UID
    next_sequence: int
    balance: int

    def encode(self, w: Writer) -> None:
        self.account_id.encode(w)
        w.u64(self.next_sequence).u64(self.balance)

    @classmethod
    def decode(cls, r: Reader) -> "Ack":
        return cls(UID.decode(r), r.u64(), r.u64())


@dataclass(frozen=True)
class ErrorReply:
    reason: ReasonCode
    message: str = ""
    expected_sequence: Optional[int] = None
    authority: Optional[str] = None

    @classmethod
    def from_error(cls, error: ZefError, authority: Optional[str] = None) -> "ErrorReply":
        return cls(error.reason, error.message, error.expected_sequence, error.authority or authority)

    def to_error(self) -> ProtocolError:
        return ProtocolError(self.reason, self.message, self.expected_sequence, self.authority)

    def encode(self, w: Writer) -> None:
        w.text(self.reason.value).text(self.message)
        w.optional(self.expected_sequence, lambda w, n: w.u64(n))
        w.optional(self.authority, lambda w, a: w.text(a))

    @classmethod
    def decode(cls, r: Reader) -> "ErrorReply":
        code = r.text()
        try:
            reason = ReasonCode(code)
        except ValueError:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"unknown reason code '{code}'")
        message = r.text()
        return cls(reason, message, r.optional(lambda r: r.u64()), r.optional(lambda r: r.text()))


WireMessage = Union[
    AuthenticatedRequest,
    Vote,
    Certificate,
    CreateAnonymousCoins,
    CreateTransparentCoins,
    CoinShares,
    CoinVotes,
    AccountInfoQuery,
    AccountInfoResponse,
    CrossShardMessage,
    ErrorReply,
    Ack,
]

_DECODERS: Dict[Tag, Callable[[Reader], WireMessage]] = {
    Tag.REQUEST: AuthenticatedRequest.decode,
    Tag.VOTE: Vote.decode,
    Tag.CONFIRM: Certificate.decode,
    Tag.CREATE_ANONYMOUS_COINS: CreateAnonymousCoins.decode,
    Tag.CREATE_TRANSPARENT_COINS: CreateTransparentCoins.decode,
    Tag.COIN_SHARES: CoinShares.decode,
    Tag.COIN_VOTES: CoinVotes.decode,
    Tag.ACCOUNT_INFO_QUERY: AccountInfoQuery.decode,
    Tag.ACCOUNT_INFO_RESPONSE: AccountInfoResponse.decode,
    Tag.CROSS_SHARD: CrossShardMessage.decode,
    Tag.ERROR: ErrorReply.decode,
    Tag.ACK: Ack.decode,
}

_TAGS: Dict[Type, Tag] = {
    AuthenticatedRequest: Tag.REQUEST,
    Vote: Tag.VOTE,
    Certificate: Tag.CONFIRM,
    CreateAnonymousCoins: Tag.CREATE_ANONYMOUS_COINS,
    CreateTransparentCoins: Tag.CREATE_TRANSPARENT_COINS,
    CoinShares: Tag.COIN_SHARES,
    CoinVotes: Tag.COIN_VOTES,
    AccountInfoQuery: Tag.ACCOUNT_INFO_QUERY,
    AccountInfoResponse: Tag.ACCOUNT_INFO_RESPONSE,
    CrossShardMessage: Tag.CROSS_SHARD,
    ErrorReply: Tag.ERROR,
    Ack: Tag.ACK,
}


def tag_of(message: WireMessage) -> Tag:
    tag = _TAGS.get(type(message))
    if tag is None:
        raise ProtocolError(ReasonCode.UNKNOWN_TAG, f"cannot frame {type(message).__name__}")
    return tag


def encode_body(message: WireMessage) -> bytes:
    """Tag byte + payload (what the length prefix counts)."""
    w = Writer()
    w.u8(tag_of(message))
    message.encode(w)
    return w.getvalue()


def encode_frame(message: WireMessage) -> bytes:
    body = encode_body(message)
    if len(body) > settings.max_frame_bytes:
        raise ProtocolError(ReasonCode.FRAME_TOO_LARGE, f"frame of {len(body)} bytes")
    return len(body).to_bytes(LENGTH_PREFIX, "little") + body


def decode_body(body: bytes) -> WireMessage:
    """
    Raises:
        ProtocolError: UnknownTag, ParseFailure
    """
    if not body:
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "empty frame")
    try:
        tag = Tag(body[0])
    except ValueError:
        raise ProtocolError(ReasonCode.UNKNOWN_TAG, f"unknown tag {body[0]}")
    return decode_exact(body[1:], _DECODERS[tag])


def decode_frame(frame: bytes, max_bytes: Optional[int] = None) -> WireMessage:
    """Decode one complete frame, length prefix included."""
    limit = max_bytes or settings.max_frame_bytes
    if len(frame) < LENGTH_PREFIX:
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "frame shorter than its length prefix")
    length = int.from_bytes(frame[:LENGTH_PREFIX], "little")
    if length > limit:
        raise ProtocolError(ReasonCode.FRAME_TOO_LARGE, f"frame of {length} bytes exceeds {limit}")
    if length != len(frame) - LENGTH_PREFIX:
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "length prefix does not match frame size")
    return decode_body(frame[LENGTH_PREFIX:])


async def read_frame(reader: asyncio.StreamReader, max_bytes: Optional[int] = None) -> Optional[bytes]:
    """
    Read one raw body (tag + payload) from a stream; None on clean EOF.

    Raises:
        ProtocolError(FrameTooLarge) before reading an oversized body
    """
    limit = max_bytes or settings.max_frame_bytes
    try:
        prefix = await reader.readexactly(LENGTH_PREFIX)
    except asyncio.IncompleteReadError as e:
        if not e.partial:
            return None
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "truncated length prefix")
    length = int.from_bytes(prefix, "little")
    if length > limit:
        raise ProtocolError(ReasonCode.FRAME_TOO_LARGE, f"frame of {length} bytes exceeds {limit}")
    try:
        return await reader.readexactly(length)
    except asyncio.IncompleteReadError:
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "truncated frame")


async def write_frame(writer: asyncio.StreamWriter, message: WireMessage) -> None:
    writer.write(encode_frame(message))
    await writer.drain()
