"""Account identifiers: bounded sequences of u64, children by concatenation."""

from dataclasses import dataclass
from typing import Optional, Tuple

from ..config import settings
from ..errors import ProtocolError, ReasonCode
from .encoding import MAX_U64, Reader, Writer, hash_bytes


@dataclass(frozen=True, order=True)
class UID:
    """Unique account id, e.g. UID((5, 0, 7))."""

    path: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.path, tuple):
            object.__setattr__(self, "path", tuple(self.path))
        if len(self.path) < 1:
            raise ProtocolError(ReasonCode.LENGTH_EXCEEDED, "UID must not be empty")
        if len(self.path) > settings.max_uid_length:
            raise ProtocolError(
                ReasonCode.LENGTH_EXCEEDED,
                f"UID length {len(self.path)} > {settings.max_uid_length}",
            )
        for n in self.path:
            if not 0 <= n <= MAX_U64:
                raise ProtocolError(ReasonCode.PARSE_FAILURE, f"UID element {n} not u64")

    @classmethod
    def root(cls, n: int) -> "UID":
        return cls((n,))

    def parent(self) -> Optional["UID"]:
        if len(self.path) < 2:
            return None
        return UID(self.path[:-1])

    @property
    def last(self) -> int:
        return self.path[-1]

    def child(self, n: int) -> "UID":
        return derive_child_id(self, n)

    def encode(self, w: Writer) -> None:
        w.seq(self.path, lambda w, n: w.u64(n))

    @classmethod
    def decode(cls, r: Reader) -> "UID":
        return cls(tuple(r.seq(lambda r: r.u64())))

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()

    def digest(self) -> bytes:
        return hash_bytes(b"zef/uid", self.to_bytes())

    @classmethod
    def parse(cls, text: str) -> "UID":
        """Parse the CLI form '5.0.7'."""
        try:
            return cls(tuple(int(part) for part in text.strip().split(".")))
        except ValueError:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"bad account id '{text}'")

    def __str__(self) -> str:
        return ".".join(str(n) for n in self.path)


def derive_child_id(parent: UID, n: int, k_max: Optional[int] = None) -> UID:
    """id' = id :: n. Raises LengthExceeded at the length bound."""
    limit = k_max if k_max is not None else settings.max_uid_length
    if len(parent.path) >= limit:
        raise ProtocolError(
            ReasonCode.LENGTH_EXCEEDED,
            f"cannot derive child of {parent}: length bound {limit} reached",
        )
    return UID(parent.path + (n,))
