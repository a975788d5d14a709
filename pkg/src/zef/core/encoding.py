"""
Canonical binary encoding.

Fixed-width little-endian integers, u32 length prefixes for byte strings
and lists, one tag byte per variant. Equal values always give equal bytes,
which is what signatures and hashes are computed over.
"""

import hashlib
import struct
from typing import Callable, Iterable, List, Optional, TypeVar

from ..errors import ProtocolError, ReasonCode

T = TypeVar("T")

MAX_U64 = (1 << 64) - 1
HASH_SIZE = 32


class Writer:
    """Append-only byte builder."""

    def __init__(self) -> None:
        self._parts: List[bytes] = []

    def u8(self, value: int) -> "Writer":
        self._parts.append(struct.pack("<B", value))
        return self

    def u32(self, value: int) -> "Writer":
        self._parts.append(struct.pack("<I", value))
        return self

    def u64(self, value: int) -> "Writer":
        if not 0 <= value <= MAX_U64:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"u64 out of range: {value}")
        self._parts.append(struct.pack("<Q", value))
        return self

    def boolean(self, value: bool) -> "Writer":
        return self.u8(1 if value else 0)

    def raw(self, data: bytes) -> "Writer":
        self._parts.append(bytes(data))
        return self

    def blob(self, data: bytes) -> "Writer":
        self.u32(len(data))
        self._parts.append(bytes(data))
        return self

    def text(self, value: str) -> "Writer":
        return self.blob(value.encode("utf-8"))

    def scalar(self, value: int) -> "Writer":
        """32-byte big-endian field element (matches hash-to-scalar output)."""
        self._parts.append(int(value).to_bytes(32, "big"))
        return self

    def optional(self, value: Optional[T], write: Callable[["Writer", T], None]) -> "Writer":
        if value is None:
            return self.u8(0)
        self.u8(1)
        write(self, value)
        return self

    def seq(self, items: Iterable[T], write: Callable[["Writer", T], None]) -> "Writer":
        items = list(items)
        self.u32(len(items))
        for item in items:
            write(self, item)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Cursor over canonical bytes. Every read is bounds-checked."""

    def __init__(self, data: bytes) -> None:
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise ProtocolError(
                ReasonCode.PARSE_FAILURE,
                f"truncated input: need {n} bytes at offset {self._pos}",
            )
        chunk = self._data[self._pos:self._pos + n].tobytes()
        self._pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def boolean(self) -> bool:
        flag = self.u8()
        if flag not in (0, 1):
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"bad boolean byte {flag}")
        return flag == 1

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as e:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"bad utf-8: {e}")

    def scalar(self) -> int:
        return int.from_bytes(self._take(32), "big")

    def optional(self, read: Callable[["Reader"], T]) -> Optional[T]:
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"bad option flag {flag}")
        return read(self)

    def seq(self, read: Callable[["Reader"], T]) -> List[T]:
        count = self.u32()
        if count > len(self._data) - self._pos:
            # every element takes at least one byte
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"list length {count} too large")
        return [read(self) for _ in range(count)]

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def finish(self) -> None:
        if self.remaining():
            raise ProtocolError(
                ReasonCode.PARSE_FAILURE, f"{self.remaining()} trailing bytes"
            )


def hash_bytes(domain: bytes, data: bytes) -> bytes:
    """Domain-separated SHA-256."""
    h = hashlib.sha256()
    h.update(len(domain).to_bytes(2, "little"))
    h.update(domain)
    h.update(data)
    return h.digest()


def decode_exact(data: bytes, read: Callable[[Reader], T]) -> T:
    """Decode one value and reject trailing garbage."""
    reader = Reader(data)
    value = read(reader)
    reader.finish()
    return value
