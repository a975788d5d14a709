"""Quorum certificate aggregation and verification."""

import logging
from typing import Iterable, List, Optional, Tuple

from ..errors import ProtocolError, ReasonCode
from ..utils.cache import VerificationCache, verification_cache
from .committee import CommitteeConfig
from .messages import Certificate, SignedValue, Vote, vote_message

logger = logging.getLogger(__name__)


def aggregate_certificate(
    cfg: CommitteeConfig,
    value: SignedValue,
    votes: Iterable[Tuple[str, bytes]],
) -> Certificate:
    """
    Build a certificate from (authority, signature) votes on `value`.

    Every vote must verify and come from a distinct committee member.
    The result is trimmed to the first quorum in authority-name order so
    that all clients produce the same certificate bytes from the same votes.

    Raises:
        ProtocolError: NotAQuorum, InvalidVote(authority), DuplicateSigner,
            UnknownAuthority
    """
    message = vote_message(value)
    seen = set()
    checked: List[Tuple[str, bytes]] = []
    for name, signature in votes:
        if name in seen:
            raise ProtocolError(ReasonCode.DUPLICATE_SIGNER, f"two votes from {name}", authority=name)
        seen.add(name)
        key = cfg.public_key(name)
        if not key.verify(message, signature):
            raise ProtocolError(ReasonCode.INVALID_VOTE, f"bad signature from {name}", authority=name)
        checked.append((name, signature))

    checked.sort(key=lambda pair: pair[0])
    trimmed: List[Tuple[str, bytes]] = []
    power = 0
    for name, signature in checked:
        trimmed.append((name, signature))
        power += cfg.power_of(name)
        if power >= cfg.quorum_threshold:
            return Certificate(value, tuple(trimmed))

    raise ProtocolError(
        ReasonCode.NOT_A_QUORUM,
        f"votes carry power {power}, quorum needs {cfg.quorum_threshold}",
    )


def certificate_from_votes(cfg: CommitteeConfig, votes: Iterable[Vote]) -> Certificate:
    """Convenience wrapper when the votes still carry their value."""
    votes = list(votes)
    if not votes:
        raise ProtocolError(ReasonCode.NOT_A_QUORUM, "no votes")
    value = votes[0].value
    for vote in votes:
        if vote.value != value:
            raise ProtocolError(ReasonCode.INVALID_VOTE, "votes disagree on the value", authority=vote.authority)
    return aggregate_certificate(cfg, value, [(v.authority, v.signature) for v in votes])


def verify_certificate(
    cfg: CommitteeConfig,
    cert: Certificate,
    cache: Optional[VerificationCache] = None,
) -> bool:
    """True iff the signers are distinct members forming a quorum and all signatures verify."""
    cache = cache or verification_cache
    try:
        encoded = cert.to_bytes()
    except ProtocolError:
        return False
    scope = cfg.digest()
    if cache.contains(scope, encoded):
        return True

    names = cert.signers
    if len(set(names)) != len(names):
        return False
    try:
        if not cfg.is_quorum(names):
            return False
        message = vote_message(cert.value)
        for name, signature in cert.signatures:
            if not cfg.public_key(name).verify(message, signature):
                return False
    except ProtocolError:
        return False

    cache.add(scope, encoded)
    return True
