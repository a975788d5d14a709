"""
Requests, operations, votes and certificates.

All values are frozen dataclasses with a canonical encoding
(encode/decode against Writer/Reader); signatures and digests are always
computed over those bytes.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Tuple, Union

from ..coins.coconut import Credential
from ..errors import ProtocolError, ReasonCode
from .encoding import HASH_SIZE, Reader, Writer, decode_exact, hash_bytes
from .keys import SIGNATURE_SIZE, KeyPair, PublicKey
from .uid import UID

REQUEST_DOMAIN = b"zef/request"
COIN_BODY_DOMAIN = b"zef/coin-body"
OWNER_DOMAIN = b"zef/owner-auth"
VOTE_DOMAIN = b"zef/vote"

OPAQUE_MARKER_PREFIX = b"\x01"
TRANSPARENT_MARKER_PREFIX = b"\x02"


# ============================================================================
# COIN REFERENCES - what a Spend / SpendAndTransfer points at
# ============================================================================

class CoinRefKind(IntEnum):
    OPAQUE_INDEX = 1
    OPAQUE_OPENING = 2
    TRANSPARENT = 3


@dataclass(frozen=True)
class OpaqueCoinIndex:
    """Opaque coin named by its index x; credential checked at coin creation."""

    index: int

    def marker(self) -> bytes:
        return OPAQUE_MARKER_PREFIX + self.index.to_bytes(8, "little")

    def encode(self, w: Writer) -> None:
        w.u8(CoinRefKind.OPAQUE_INDEX).u64(self.index)


@dataclass(frozen=True)
class OpaqueCoinOpening:
    """Opaque coin fully opened (x, q, v, sigma) for redemption."""

    index: int
    seed: int
    value: int
    credential: Credential

    def marker(self) -> bytes:
        return OPAQUE_MARKER_PREFIX + self.index.to_bytes(8, "little")

    def encode(self, w: Writer) -> None:
        w.u8(CoinRefKind.OPAQUE_OPENING).u64(self.index).scalar(self.seed).u64(self.value)
        self.credential.encode(w)


@dataclass(frozen=True)
class TransparentCoinRef:
    """Transparent coin: a quorum certificate over (id, v, r)."""

    certificate: "Certificate"

    @property
    def body(self) -> "CoinBody":
        value = self.certificate.value
        if not isinstance(value, CoinBody):
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "transparent coin must certify a coin body")
        return value

    def marker(self) -> bytes:
        return TRANSPARENT_MARKER_PREFIX + self.body.seed

    def encode(self, w: Writer) -> None:
        w.u8(CoinRefKind.TRANSPARENT)
        self.certificate.encode(w)


CoinRef = Union[OpaqueCoinIndex, OpaqueCoinOpening, TransparentCoinRef]


def decode_coin_ref(r: Reader) -> CoinRef:
    kind = r.u8()
    if kind == CoinRefKind.OPAQUE_INDEX:
        return OpaqueCoinIndex(r.u64())
    if kind == CoinRefKind.OPAQUE_OPENING:
        index, seed, value = r.u64(), r.scalar(), r.u64()
        return OpaqueCoinOpening(index, seed, value, Credential.decode(r))
    if kind == CoinRefKind.TRANSPARENT:
        return TransparentCoinRef(Certificate.decode(r))
    raise ProtocolError(ReasonCode.PARSE_FAILURE, f"unknown coin reference kind {kind}")


# ============================================================================
# OPERATIONS
# ============================================================================

class OperationKind(IntEnum):
    OPEN_ACCOUNT = 1
    TRANSFER = 2
    CHANGE_KEY = 3
    CLOSE_ACCOUNT = 4
    SPEND = 5
    SPEND_AND_TRANSFER = 6


@dataclass(frozen=True)
class OpenAccount:
    new_id: UID
    new_owner: PublicKey

    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.OPEN_ACCOUNT)
        self.new_id.encode(w)
        self.new_owner.encode(w)


@dataclass(frozen=True)
class Transfer:
    recipient: UID
    amount: int

    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.TRANSFER)
        self.recipient.encode(w)
        w.u64(self.amount)


@dataclass(frozen=True)
class ChangeKey:
    new_owner: PublicKey

    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.CHANGE_KEY)
        self.new_owner.encode(w)


@dataclass(frozen=True)
class CloseAccount:
    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.CLOSE_ACCOUNT)


@dataclass(frozen=True)
class Spend:
    """Withdraw `amount` publicly and/or consume `coin`, committing to `commitment_hash`."""

    amount: int
    coin: Optional[CoinRef]
    commitment_hash: bytes

    def __post_init__(self) -> None:
        if len(self.commitment_hash) != HASH_SIZE:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "commitment hash must be 32 bytes")

    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.SPEND).u64(self.amount)
        w.optional(self.coin, lambda w, c: c.encode(w))
        w.raw(self.commitment_hash)


@dataclass(frozen=True)
class SpendAndTransfer:
    recipient: UID
    coin: CoinRef

    def encode(self, w: Writer) -> None:
        w.u8(OperationKind.SPEND_AND_TRANSFER)
        self.recipient.encode(w)
        self.coin.encode(w)


Operation = Union[OpenAccount, Transfer, ChangeKey, CloseAccount, Spend, SpendAndTransfer]


def decode_operation(r: Reader) -> Operation:
    kind = r.u8()
    if kind == OperationKind.OPEN_ACCOUNT:
        return OpenAccount(UID.decode(r), PublicKey.decode(r))
    if kind == OperationKind.TRANSFER:
        return Transfer(UID.decode(r), r.u64())
    if kind == OperationKind.CHANGE_KEY:
        return ChangeKey(PublicKey.decode(r))
    if kind == OperationKind.CLOSE_ACCOUNT:
        return CloseAccount()
    if kind == OperationKind.SPEND:
        amount = r.u64()
        coin = r.optional(decode_coin_ref)
        return Spend(amount, coin, r.raw(HASH_SIZE))
    if kind == OperationKind.SPEND_AND_TRANSFER:
        return SpendAndTransfer(UID.decode(r), decode_coin_ref(r))
    raise ProtocolError(ReasonCode.PARSE_FAILURE, f"unknown operation kind {kind}")


def operation_name(operation: Operation) -> str:
    return type(operation).__name__


# ============================================================================
# SIGNED VALUES - requests and transparent coin bodies
# ============================================================================

class ValueKind(IntEnum):
    REQUEST = 1
    COIN_BODY = 2


@dataclass(frozen=True)
class Request:
    """Execute(id, n, O)."""

    account_id: UID
    sequence: int
    operation: Operation

    def encode(self, w: Writer) -> None:
        w.u8(ValueKind.REQUEST)
        self.account_id.encode(w)
        w.u64(self.sequence)
        self.operation.encode(w)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()

    def digest(self) -> bytes:
        return hash_bytes(REQUEST_DOMAIN, self.to_bytes())

    def signed_by(self, owner: KeyPair) -> "AuthenticatedRequest":
        return AuthenticatedRequest(self, owner.sign(OWNER_DOMAIN + self.to_bytes()))


@dataclass(frozen=True)
class CoinBody:
    """Transparent coin triplet S = (id, v, r)."""

    account_id: UID
    value: int
    seed: bytes

    def __post_init__(self) -> None:
        if len(self.seed) != 32:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "coin seed must be 32 bytes")

    def encode(self, w: Writer) -> None:
        w.u8(ValueKind.COIN_BODY)
        self.account_id.encode(w)
        w.u64(self.value)
        w.raw(self.seed)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()

    def digest(self) -> bytes:
        return hash_bytes(COIN_BODY_DOMAIN, self.to_bytes())


SignedValue = Union[Request, CoinBody]


def decode_value(r: Reader) -> SignedValue:
    kind = r.u8()
    if kind == ValueKind.REQUEST:
        account_id = UID.decode(r)
        sequence = r.u64()
        return Request(account_id, sequence, decode_operation(r))
    if kind == ValueKind.COIN_BODY:
        account_id = UID.decode(r)
        value = r.u64()
        return CoinBody(account_id, value, r.raw(32))
    raise ProtocolError(ReasonCode.PARSE_FAILURE, f"unknown value kind {kind}")


def vote_message(value: SignedValue) -> bytes:
    return VOTE_DOMAIN + value.to_bytes()


@dataclass(frozen=True)
class AuthenticatedRequest:
    """auth[R]: a request plus the owner's signature."""

    request: Request
    owner_signature: bytes

    def verify(self, owner: PublicKey) -> bool:
        return owner.verify(OWNER_DOMAIN + self.request.to_bytes(), self.owner_signature)

    def encode(self, w: Writer) -> None:
        self.request.encode(w)
        w.blob(self.owner_signature)

    @classmethod
    def decode(cls, r: Reader) -> "AuthenticatedRequest":
        value = decode_value(r)
        if not isinstance(value, Request):
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "expected a request")
        return cls(value, r.blob())


@dataclass(frozen=True)
class Vote:
    """One authority's signature over a value."""

    value: SignedValue
    authority: str
    signature: bytes

    @classmethod
    def create(cls, value: SignedValue, authority: str, key: KeyPair) -> "Vote":
        return cls(value, authority, key.sign(vote_message(value)))

    def verify(self, key: PublicKey) -> bool:
        return key.verify(vote_message(self.value), self.signature)

    def encode(self, w: Writer) -> None:
        self.value.encode(w)
        w.text(self.authority)
        w.blob(self.signature)

    @classmethod
    def decode(cls, r: Reader) -> "Vote":
        value = decode_value(r)
        return cls(value, r.text(), r.blob())


@dataclass(frozen=True)
class Certificate:
    """A value plus a quorum of (authority, signature) pairs, sorted by name."""

    value: SignedValue
    signatures: Tuple[Tuple[str, bytes], ...] = field(default_factory=tuple)

    @property
    def signers(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.signatures)

    @property
    def request(self) -> Request:
        if not isinstance(self.value, Request):
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "certificate is not over a request")
        return self.value

    def digest(self) -> bytes:
        """Digest of the certified value (independent of which quorum signed)."""
        return self.value.digest()

    def encode(self, w: Writer) -> None:
        self.value.encode(w)

        def write_sig(w: Writer, pair: Tuple[str, bytes]) -> None:
            w.text(pair[0])
            w.blob(pair[1])

        w.seq(self.signatures, write_sig)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "Certificate":
        value = decode_value(r)
        sigs = r.seq(lambda r: (r.text(), r.blob()))
        for _, sig in sigs:
            if len(sig) != SIGNATURE_SIZE:
                raise ProtocolError(ReasonCode.PARSE_FAILURE, "bad signature length")
        return cls(value, tuple(sigs))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        return decode_exact(data, cls.decode)


# ============================================================================
# ACCOUNT INFO - synchronization queries
# ============================================================================

@dataclass(frozen=True)
class AccountInfoQuery:
    account_id: UID
    from_index: int = 0

    def encode(self, w: Writer) -> None:
        self.account_id.encode(w)
        w.u64(self.from_index)

    @classmethod
    def decode(cls, r: Reader) -> "AccountInfoQuery":
        return cls(UID.decode(r), r.u64())


@dataclass(frozen=True)
class AccountInfoResponse:
    """What an authority knows about one account. present=False for unknown ids."""

    account_id: UID
    present: bool
    owner: Optional[PublicKey] = None
    balance: int = 0
    next_sequence: int = 0
    pending: Optional[Request] = None
    certificates: Tuple[Certificate, ...] = ()
    spent: Tuple[bytes, ...] = ()
    received_count: int = 0

    def summary(self) -> Tuple:
        """The agreement-relevant part of the state."""
        owner = self.owner.data if self.owner else None
        return (owner, self.balance, self.next_sequence, tuple(sorted(self.spent)))

    def encode(self, w: Writer) -> None:
        self.account_id.encode(w)
        w.boolean(self.present)
        w.optional(self.owner, lambda w, k: k.encode(w))
        w.u64(self.balance).u64(self.next_sequence)
        w.optional(self.pending, lambda w, req: req.encode(w))
        w.seq(self.certificates, lambda w, c: c.encode(w))
        w.seq(sorted(self.spent), lambda w, m: w.blob(m))
        w.u64(self.received_count)

    @classmethod
    def decode(cls, r: Reader) -> "AccountInfoResponse":
        account_id = UID.decode(r)
        present = r.boolean()
        owner = r.optional(PublicKey.decode)
        balance, next_sequence = r.u64(), r.u64()

        def read_request(r: Reader) -> Request:
            value = decode_value(r)
            if not isinstance(value, Request):
                raise ProtocolError(ReasonCode.PARSE_FAILURE, "pending must be a request")
            return value

        pending = r.optional(read_request)
        certificates = tuple(r.seq(Certificate.decode))
        spent = tuple(r.seq(lambda r: r.blob()))
        return cls(account_id, present, owner, balance, next_sequence, pending,
                   certificates, spent, r.u64())
