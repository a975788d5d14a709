"""
Transparent coins: quorum certificates over plaintext (id, v, r).

Same Spend / SpendAndTransfer flow as opaque coins, minus blinding and
proofs. Values and recipients are visible to authorities.
"""

import logging
import secrets
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from ..core.certificates import aggregate_certificate, verify_certificate
from ..core.committee import CommitteeConfig
from ..core.encoding import Reader, Writer, hash_bytes
from ..core.keys import KeyPair
from ..core.messages import Certificate, CoinBody, Spend, TransparentCoinRef, Vote, decode_value
from ..core.uid import UID
from ..errors import CryptoError, ProtocolError, ReasonCode

logger = logging.getLogger(__name__)

OUTPUTS_DOMAIN = b"zef/transparent-outputs"


def new_coin_body(account_id: UID, value: int) -> CoinBody:
    return CoinBody(account_id, value, secrets.token_bytes(32))


def outputs_hash(outputs: Sequence[CoinBody]) -> bytes:
    """h = hash(S_1 .. S_d), the value every Spend commits to."""
    w = Writer()
    w.seq(outputs, lambda w, body: body.encode(w))
    return hash_bytes(OUTPUTS_DOMAIN, w.getvalue())


@dataclass(frozen=True)
class TransparentCoin:
    """T = cert[(id, v, r)]."""

    certificate: Certificate

    @property
    def body(self) -> CoinBody:
        value = self.certificate.value
        if not isinstance(value, CoinBody):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "not a coin certificate")
        return value

    @property
    def account_id(self) -> UID:
        return self.body.account_id

    @property
    def value(self) -> int:
        return self.body.value

    @property
    def seed(self) -> bytes:
        return self.body.seed

    def ref(self) -> TransparentCoinRef:
        return TransparentCoinRef(self.certificate)

    def verify(self, cfg: CommitteeConfig) -> bool:
        return isinstance(self.certificate.value, CoinBody) and verify_certificate(cfg, self.certificate)

    def encode(self, w: Writer) -> None:
        self.certificate.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "TransparentCoin":
        return cls(Certificate.decode(r))


@dataclass(frozen=True)
class CreateTransparentCoins:
    """Free request: the Spend certificates C_1..C_l and the plaintext outputs S_1..S_d."""

    certificates: Tuple[Certificate, ...]
    outputs: Tuple[CoinBody, ...]

    def encode(self, w: Writer) -> None:
        w.seq(self.certificates, lambda w, c: c.encode(w))
        w.seq(self.outputs, lambda w, body: body.encode(w))

    @classmethod
    def decode(cls, r: Reader) -> "CreateTransparentCoins":
        certificates = tuple(r.seq(Certificate.decode))
        outputs = tuple(r.seq(_read_coin_body))
        return cls(certificates, outputs)


def _read_coin_body(r: Reader) -> CoinBody:
    value = decode_value(r)
    if not isinstance(value, CoinBody):
        raise ProtocolError(ReasonCode.PARSE_FAILURE, "expected a coin body")
    return value


@dataclass(frozen=True)
class TransparentSpendPlan:
    """The Spend operations to certify, and the outputs they commit to."""

    spends: Tuple[Tuple[UID, Spend], ...]
    outputs: Tuple[CoinBody, ...]

    @property
    def commitment_hash(self) -> bytes:
        return outputs_hash(self.outputs)


def build_transparent_spends(
    coins: Sequence[TransparentCoin],
    withdrawals: Mapping[UID, int],
    outputs: Sequence[CoinBody],
    range_bits: int = 63,
) -> TransparentSpendPlan:
    """
    One Spend per input coin plus one coin-less Spend per withdrawing account.

    Raises:
        CryptoError: ConservationViolated, DuplicateCoin, ValueOutOfRange
    """
    v_max = (1 << range_bits) - 1
    seeds = [c.seed for c in coins]
    if len(set(seeds)) != len(seeds):
        raise CryptoError(ReasonCode.DUPLICATE_COIN, "the same coin is spent twice")
    out_seeds = [body.seed for body in outputs]
    if len(set(out_seeds)) != len(out_seeds):
        raise CryptoError(ReasonCode.DUPLICATE_COIN, "output seeds must be distinct")
    if any(not 0 <= body.value <= v_max for body in outputs):
        raise CryptoError(ReasonCode.VALUE_OUT_OF_RANGE, f"output values must be in [0, {v_max}]")
    total_in = sum(c.value for c in coins) + sum(withdrawals.values())
    total_out = sum(body.value for body in outputs)
    if total_in != total_out:
        raise CryptoError(ReasonCode.CONSERVATION_VIOLATED, f"inputs {total_in} != outputs {total_out}")

    h = outputs_hash(outputs)
    spends: List[Tuple[UID, Spend]] = [(c.account_id, Spend(0, c.ref(), h)) for c in coins]
    for account_id, amount in sorted(withdrawals.items()):
        if amount > 0:
            spends.append((account_id, Spend(amount, None, h)))
    return TransparentSpendPlan(tuple(spends), tuple(outputs))


def handle_transparent_coin_creation(
    cfg: CommitteeConfig,
    request: CreateTransparentCoins,
    authority: str,
    key: KeyPair,
) -> Tuple[Vote, ...]:
    """
    Check the Spend certificates and sign every output triplet.

    Raises:
        CryptoError: InvalidCertificate, HashMismatch, DuplicateCoin,
            ConservationViolated, ValueOutOfRange
    """
    if not request.outputs:
        raise CryptoError(ReasonCode.CONSERVATION_VIOLATED, "no outputs")
    v_max = (1 << cfg.range_bits) - 1
    h = outputs_hash(request.outputs)
    total_in = 0
    seen_certs = set()
    seen_inputs = set()
    for cert in request.certificates:
        if not verify_certificate(cfg, cert):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "spend certificate does not verify")
        spend_request = cert.value
        spend = getattr(spend_request, "operation", None)
        if not isinstance(spend, Spend):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "certificate is not over a Spend")
        if spend.commitment_hash != h:
            raise CryptoError(ReasonCode.HASH_MISMATCH, f"spend by {spend_request.account_id} commits elsewhere")
        digest = cert.digest()
        if digest in seen_certs:
            raise CryptoError(ReasonCode.DUPLICATE_COIN, "the same spend certificate appears twice")
        seen_certs.add(digest)
        total_in += spend.amount
        if spend.coin is None:
            continue
        if not isinstance(spend.coin, TransparentCoinRef):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "transparent creation needs transparent inputs")
        coin = TransparentCoin(spend.coin.certificate)
        if not coin.verify(cfg) or coin.account_id != spend_request.account_id:
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "input coin certificate invalid")
        if coin.seed in seen_inputs:
            raise CryptoError(ReasonCode.DUPLICATE_COIN, "input coins must be distinct")
        seen_inputs.add(coin.seed)
        total_in += coin.value

    out_seeds = {body.seed for body in request.outputs}
    if len(out_seeds) != len(request.outputs):
        raise CryptoError(ReasonCode.DUPLICATE_COIN, "output seeds must be distinct")
    if any(body.value > v_max for body in request.outputs):
        raise CryptoError(ReasonCode.VALUE_OUT_OF_RANGE, f"output values must be <= {v_max}")
    total_out = sum(body.value for body in request.outputs)
    if total_in != total_out:
        raise CryptoError(ReasonCode.CONSERVATION_VIOLATED, f"inputs {total_in} != outputs {total_out}")

    logger.debug(f"{authority}: signing {len(request.outputs)} transparent coins worth {total_out}")
    return tuple(Vote.create(body, authority, key) for body in request.outputs)


def collect_transparent_coins(
    cfg: CommitteeConfig,
    outputs: Sequence[CoinBody],
    votes: Iterable[Vote],
) -> Tuple[TransparentCoin, ...]:
    """
    Aggregate per-output votes into coins.

    Raises:
        ProtocolError(NotAQuorum) if some output lacks a quorum
        CryptoError(DuplicateCoin) if two outputs share a seed
    """
    if len({body.seed for body in outputs}) != len(outputs):
        raise CryptoError(ReasonCode.DUPLICATE_COIN, "output seeds must be distinct")
    by_body: Dict[bytes, List[Tuple[str, bytes]]] = {body.to_bytes(): [] for body in outputs}
    for vote in votes:
        if not isinstance(vote.value, CoinBody):
            continue
        bucket = by_body.get(vote.value.to_bytes())
        if bucket is not None and vote.authority not in {name for name, _ in bucket}:
            if vote.verify(cfg.public_key(vote.authority)):
                bucket.append((vote.authority, vote.signature))
    return tuple(
        TransparentCoin(aggregate_certificate(cfg, body, by_body[body.to_bytes()])) for body in outputs
    )
