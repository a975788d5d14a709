"""
Bring a lagging authority up to date by replaying certificates.

History is sequential per account, so an authority that missed some
confirmations only needs them again in order. When the account itself is
unknown, the parent's OpenAccount certificate is confirmed first (and the
parent synced before that, up the id chain). Certificates the wallet does
not hold are fetched from other authorities and checked before use.
"""

import asyncio
import logging
from typing import Dict, List, Optional

from ..authority.wire import Ack, ErrorReply
from ..config import settings
from ..core.certificates import verify_certificate
from ..core.committee import CommitteeConfig
from ..core.messages import AccountInfoQuery, AccountInfoResponse, Certificate, OpenAccount, SpendAndTransfer, Transfer
from ..core.uid import UID
from ..errors import ReasonCode, WalletError, ZefError
from .state import WalletState
from .transport import Transport

logger = logging.getLogger(__name__)


def credits_account(cert: Certificate, account_id: UID) -> bool:
    operation = cert.request.operation
    return isinstance(operation, (Transfer, SpendAndTransfer)) and operation.recipient == account_id


class Synchronizer:
    """
    Replays certificates from the wallet (or from other authorities) to one authority.

    Args:
        cfg: committee configuration
        wallet: source of owned history and received certificates
        transport: how to reach authorities
    """

    def __init__(self, cfg: CommitteeConfig, wallet: WalletState, transport: Transport):
        self.cfg = cfg
        self.wallet = wallet
        self.transport = transport
        self.replayed = 0

    async def query(self, authority: str, account_id: UID, from_index: int = 0) -> AccountInfoResponse:
        reply = await self.transport.send(authority, self.cfg.shard_of(account_id), AccountInfoQuery(account_id, from_index))
        if isinstance(reply, ErrorReply):
            raise reply.to_error()
        if not isinstance(reply, AccountInfoResponse):
            raise WalletError(ReasonCode.INVALID_OPERATION, f"{authority} answered {type(reply).__name__}")
        return reply

    async def sync_authority(self, authority: str, account_id: UID) -> int:
        """
        Replay everything the wallet knows about `account_id` to `authority`.

        Also replays the senders' certificates behind transfers this wallet
        received for the account, so credits land there too. A debit the
        authority cannot fund yet (BalanceOverflow) is retried after the
        credits went in.
        Returns the number of certificates confirmed.

        Raises:
            WalletError(HistoryUnavailable): some certificate is neither in the
                wallet nor obtainable from another authority
        """
        before = self.replayed
        for attempt in range(settings.max_sync_rounds):
            try:
                await self.sync_account(authority, account_id)
            except ZefError as e:
                if e.reason != ReasonCode.BALANCE_OVERFLOW or attempt + 1 == settings.max_sync_rounds:
                    raise
                logger.debug(f"{authority} cannot fund a debit on {account_id} yet, replaying credits first")
                await self._replay_credits(authority, account_id)
                continue
            break
        await self._replay_credits(authority, account_id)
        count = self.replayed - before
        if count:
            logger.info(f"Synced {authority} on {account_id}: replayed {count} certificates")
        return count

    async def _replay_credits(self, authority: str, account_id: UID) -> None:
        for cert in list(self.wallet.received):
            if credits_account(cert, account_id):
                sender = cert.request
                await self.sync_account(authority, sender.account_id, sender.sequence + 1)
                await self.confirm(authority, cert)

    async def sync_account(self, authority: str, account_id: UID, target: Optional[int] = None, depth: int = 0) -> None:
        """Drive `authority` to at least `target` (the wallet's next sequence by default) on `account_id`."""
        if depth > settings.max_uid_length:
            raise WalletError(ReasonCode.HISTORY_UNAVAILABLE, f"id chain above {account_id} too long")
        if target is None:
            owned = self.wallet.accounts.get(account_id)
            target = owned.next_sequence if owned else 0

        info = await self.query(authority, account_id)
        if not info.present:
            opening = await self._opening_certificate(account_id)
            if opening is None:
                if target == 0:
                    return
                raise WalletError(ReasonCode.HISTORY_UNAVAILABLE, f"no creation certificate for {account_id}")
            parent = opening.request
            await self.sync_account(authority, parent.account_id, parent.sequence, depth + 1)
            await self.confirm(authority, opening)
            info = await self.query(authority, account_id)

        if info.next_sequence < target:
            for cert in await self._history(account_id, info.next_sequence, target):
                await self.confirm(authority, cert)
            info = await self.query(authority, account_id)
        self.wallet.advance_cursor(authority, account_id, info.next_sequence)

    async def confirm(self, authority: str, cert: Certificate) -> Ack:
        account_id = cert.request.account_id
        reply = await self.transport.send(authority, self.cfg.shard_of(account_id), cert)
        if isinstance(reply, ErrorReply):
            raise reply.to_error()
        if not isinstance(reply, Ack):
            raise WalletError(ReasonCode.INVALID_OPERATION, f"{authority} answered {type(reply).__name__} to a confirmation")
        self.replayed += 1
        return reply

    # ------------------------------------------------------------------
    # finding certificates
    # ------------------------------------------------------------------

    def _known(self, account_id: UID) -> Dict[int, Certificate]:
        known: Dict[int, Certificate] = {}
        owned = self.wallet.accounts.get(account_id)
        if owned is not None:
            for cert in owned.certificates:
                known[cert.request.sequence] = cert
        for cert in self.wallet.received:
            if cert.request.account_id == account_id:
                known[cert.request.sequence] = cert
        return known

    async def _history(self, account_id: UID, start: int, end: int) -> List[Certificate]:
        known = self._known(account_id)
        if any(n not in known for n in range(start, end)):
            for cert in await self._fetch(account_id, start):
                known.setdefault(cert.request.sequence, cert)
        missing = [n for n in range(start, end) if n not in known]
        if missing:
            raise WalletError(
                ReasonCode.HISTORY_UNAVAILABLE,
                f"certificates {missing[0]}..{missing[-1]} of {account_id} not available",
            )
        return [known[n] for n in range(start, end)]

    async def _fetch(self, account_id: UID, start: int) -> List[Certificate]:
        """Ask every authority for the account's confirmed certificates from `start` on."""
        found: List[Certificate] = []
        for name in self.cfg.names:
            try:
                info = await self.query(name, account_id, start)
            except (OSError, asyncio.TimeoutError, ZefError) as e:
                logger.debug(f"History fetch from {name} failed: {e}")
                continue
            for cert in info.certificates:
                if cert.request.account_id == account_id and verify_certificate(self.cfg, cert):
                    found.append(cert)
        return found

    async def _opening_certificate(self, account_id: UID) -> Optional[Certificate]:
        owned = self.wallet.accounts.get(account_id)
        if owned is not None and owned.opening is not None:
            return owned.opening
        for cert in self.wallet.received:
            if _opens(cert, account_id):
                return cert
        parent = account_id.parent()
        if parent is None:
            return None
        parent_owned = self.wallet.accounts.get(parent)
        if parent_owned is not None:
            for cert in parent_owned.certificates:
                if _opens(cert, account_id):
                    return cert
        for cert in await self._fetch(parent, 0):
            if _opens(cert, account_id):
                return cert
        return None


def _opens(cert: Certificate, account_id: UID) -> bool:
    operation = cert.request.operation
    return isinstance(operation, OpenAccount) and operation.new_id == account_id
