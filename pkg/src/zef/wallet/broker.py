"""
Account creation through a broker.

The broker owns a parent account and certifies OpenAccount(parent::n, pk)
for a key the user generated. The user checks the certificate before
treating the account as theirs, and may rotate to a fresh key right away
so the broker never learns which key ends up owning it.
"""

import logging
from typing import TYPE_CHECKING, Optional, Set, Tuple

from ..core.certificates import verify_certificate
from ..core.committee import CommitteeConfig
from ..core.keys import PublicKey
from ..core.messages import Certificate, OpenAccount, Request
from ..core.uid import UID, derive_child_id
from ..errors import ProtocolError, ReasonCode, WalletError

if TYPE_CHECKING:
    from .client import ZefClient

logger = logging.getLogger(__name__)


def verify_opening_certificate(
    cfg: CommitteeConfig,
    cert: Certificate,
    expected_key: PublicKey,
    seen_keys: Optional[Set[bytes]] = None,
) -> UID:
    """
    Recipient-side checks on a broker's OpenAccount certificate.

    Returns:
        the new account id

    Raises:
        WalletError(CertificateMismatch): the certificate does not verify, is
            not an OpenAccount, names another key or a non-child id, or its
            key was already seen in an accepted certificate (a replay)
    """
    if not verify_certificate(cfg, cert):
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "certificate does not verify")
    request = cert.value
    if not isinstance(request, Request) or not isinstance(request.operation, OpenAccount):
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "not an OpenAccount certificate")
    operation = request.operation
    if operation.new_owner != expected_key:
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "certificate opens the account for another key")
    try:
        expected_id = derive_child_id(request.account_id, request.sequence)
    except ProtocolError:
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "parent id is at the length bound")
    if operation.new_id != expected_id:
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, f"{operation.new_id} is not {expected_id}")
    if seen_keys is not None and expected_key.data in seen_keys:
        raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "key already used by an accepted account (replayed certificate)")
    return operation.new_id


async def open_account_via_broker(
    broker: "ZefClient",
    parent_id: UID,
    recipient_key: PublicKey,
) -> Tuple[UID, Certificate]:
    """Broker side: certify OpenAccount(parent::n, recipient_key)."""
    new_id, cert = await broker.open_account(parent_id, recipient_key)
    logger.info(f"Broker opened {new_id} under {parent_id} for {recipient_key}")
    return new_id, cert
