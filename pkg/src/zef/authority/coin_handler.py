"""
Free coin-creation requests, served by any shard.

Stateless: everything needed is inside the request (Spend certificates
plus the bundle), so a replayed request gets the same answer.
"""

import logging

from ..coins.coconut import SecretKey
from ..coins.opaque import (
    CreateAnonymousCoins,
    check_distinct_outputs,
    check_spend_certificates,
    issue_blind_coin,
)
from ..coins.params import PublicParams
from ..coins.transparent import CreateTransparentCoins, handle_transparent_coin_creation
from ..core.committee import CommitteeConfig
from ..core.keys import KeyPair
from .wire import CoinShares, CoinVotes

logger = logging.getLogger(__name__)


def handle_anonymous_coin_creation(
    cfg: CommitteeConfig,
    params: PublicParams,
    secret: SecretKey,
    authority: str,
    request: CreateAnonymousCoins,
) -> CoinShares:
    """
    Check the Spend certificates against the bundle and blind-sign each output.

    Raises:
        CryptoError: InvalidCertificate, HashMismatch, DuplicateSpentMarker,
            DuplicateCoin, InvalidProof, InvalidInputCoin
    """
    bundle = request.request
    input_keys, withdrawals = check_spend_certificates(cfg, params, request.certificates, bundle.digest())
    check_distinct_outputs(params, bundle)
    shares = issue_blind_coin(params, secret, cfg.credential_key(), bundle, input_keys, withdrawals)
    logger.debug(
        f"{authority}: issued {len(shares)} blinded shares for {len(bundle.inputs)} inputs, "
        f"withdrawing {sum(withdrawals)}"
    )
    return CoinShares(authority, shares)


def handle_transparent_creation(
    cfg: CommitteeConfig,
    key: KeyPair,
    authority: str,
    request: CreateTransparentCoins,
) -> CoinVotes:
    votes = handle_transparent_coin_creation(cfg, request, authority, key)
    return CoinVotes(authority, votes)
