"""
Account state and cross-shard messages.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Set, Union

from ..core.encoding import Reader, Writer, hash_bytes
from ..core.keys import PublicKey
from ..core.messages import Certificate, Request, decode_value
from ..core.uid import UID
from ..errors import ProtocolError, ReasonCode


@dataclass
class AccountState:
    """
    One account as seen by one authority.

    Attributes:
        owner: current owner key, None once closed or before activation
        balance: public balance, within [0, MAX_U64]
        next_sequence: sequence number of the next request to accept
        pending: request this authority has voted for at next_sequence
        confirmed: executed certificates, in order (len == next_sequence)
        received: certificates whose effects were delivered here
        spent: consumed coin markers
        received_keys: origin digests of delivered cross-shard effects
    """

    owner: Optional[PublicKey] = None
    balance: int = 0
    next_sequence: int = 0
    pending: Optional[Request] = None
    confirmed: List[Certificate] = field(default_factory=list)
    received: List[Certificate] = field(default_factory=list)
    spent: Set[bytes] = field(default_factory=set)
    received_keys: Set[bytes] = field(default_factory=set)

    @property
    def is_active(self) -> bool:
        return self.owner is not None

    def copy(self) -> "AccountState":
        return AccountState(
            owner=self.owner,
            balance=self.balance,
            next_sequence=self.next_sequence,
            pending=self.pending,
            confirmed=list(self.confirmed),
            received=list(self.received),
            spent=set(self.spent),
            received_keys=set(self.received_keys),
        )

    def summary(self) -> tuple:
        """(owner, balance, next_sequence, spent): what honest authorities must agree on."""
        owner = self.owner.data if self.owner else None
        return (owner, self.balance, self.next_sequence, tuple(sorted(self.spent)))

    def encode(self, w: Writer) -> None:
        w.optional(self.owner, lambda w, k: k.encode(w))
        w.u64(self.balance).u64(self.next_sequence)
        w.optional(self.pending, lambda w, req: req.encode(w))
        w.seq(self.confirmed, lambda w, c: c.encode(w))
        w.seq(self.received, lambda w, c: c.encode(w))
        w.seq(sorted(self.spent), lambda w, m: w.blob(m))
        w.seq(sorted(self.received_keys), lambda w, k: w.blob(k))

    @classmethod
    def decode(cls, r: Reader) -> "AccountState":
        owner = r.optional(PublicKey.decode)
        balance, next_sequence = r.u64(), r.u64()

        def read_request(r: Reader) -> Request:
            value = decode_value(r)
            if not isinstance(value, Request):
                raise ProtocolError(ReasonCode.PARSE_FAILURE, "pending must be a request")
            return value

        pending = r.optional(read_request)
        confirmed = r.seq(Certificate.decode)
        received = r.seq(Certificate.decode)
        spent = set(r.seq(lambda r: r.blob()))
        received_keys = set(r.seq(lambda r: r.blob()))
        return cls(owner, balance, next_sequence, pending, confirmed, received, spent, received_keys)

    def digest(self) -> bytes:
        w = Writer()
        self.encode(w)
        return hash_bytes(b"zef/account-state", w.getvalue())


# ============================================================================
# CROSS-SHARD
# ============================================================================

class EffectKind(IntEnum):
    ACTIVATE = 1
    CREDIT = 2


@dataclass(frozen=True)
class Activate:
    owner: PublicKey


@dataclass(frozen=True)
class Credit:
    amount: int


Effect = Union[Activate, Credit]


@dataclass(frozen=True)
class CrossShardMessage:
    """An executed operation's effect on another account, keyed by its certificate."""

    target: UID
    effect: Effect
    certificate: Certificate

    @property
    def origin_digest(self) -> bytes:
        return self.certificate.digest()

    def encode(self, w: Writer) -> None:
        self.target.encode(w)
        if isinstance(self.effect, Activate):
            w.u8(EffectKind.ACTIVATE)
            self.effect.owner.encode(w)
        else:
            w.u8(EffectKind.CREDIT).u64(self.effect.amount)
        self.certificate.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "CrossShardMessage":
        target = UID.decode(r)
        kind = r.u8()
        if kind == EffectKind.ACTIVATE:
            effect: Effect = Activate(PublicKey.decode(r))
        elif kind == EffectKind.CREDIT:
            effect = Credit(r.u64())
        else:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, f"unknown cross-shard effect {kind}")
        return cls(target, effect, Certificate.decode(r))

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()
