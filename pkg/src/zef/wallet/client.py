"""
Wallet Client
=============

High-level interface over the wallet graphs: account operations, broker
account creation, coin creation and redemption, synchronization.

Usage:
    from src.zef.wallet.client import ZefClient

    client = ZefClient(cfg, WalletState.load("alice.wallet"), TcpTransport(cfg))
    cert = await client.transfer(UID.root(1), UID.root(2), 10)

    coins = await client.spend_and_create_coins([], {UID.root(1): 8}, [(UID.root(1), 6), (UID.root(1), 2)])
    await client.redeem_coin(coins[0], UID.root(2))
"""

import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from ..authority.wire import WireMessage
from ..coins.opaque import OpaqueCoin
from ..coins.params import PublicParams, setup
from ..coins.transparent import TransparentCoin
from ..core.committee import CommitteeConfig
from ..core.keys import KeyPair, PublicKey
from ..core.messages import (
    AccountInfoQuery,
    AccountInfoResponse,
    Certificate,
    ChangeKey,
    CloseAccount,
    OpenAccount,
    Operation,
    SpendAndTransfer,
    Transfer,
)
from ..core.uid import UID, derive_child_id
from ..errors import ReasonCode, WalletError
from .broker import verify_opening_certificate
from .flows import AccountOpFlow, CoinFlow
from .graph import build_account_op_graph, build_coin_graph
from .quorum import QuorumDriver, Verdict
from .state import WalletState
from .sync import Synchronizer
from .transport import Transport

logger = logging.getLogger(__name__)

GRAPH_CONFIG = {"recursion_limit": 64}


class ZefClient:
    """
    One wallet talking to one committee.

    Attributes:
        cfg: committee configuration
        wallet: persisted wallet state (saved after every step when it has a path)
        transport: how authorities are reached
        driver: quorum broadcast driver
        synchronizer: certificate replay to lagging authorities
        last_run: final graph state of the most recent flow (timings, acks)
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        wallet: WalletState,
        transport: Transport,
        params: Optional[PublicParams] = None,
        driver: Optional[QuorumDriver] = None,
    ):
        self.cfg = cfg
        self.wallet = wallet
        self.transport = transport
        self._params = params
        self.driver = driver or QuorumDriver(cfg, transport)
        self.synchronizer = Synchronizer(cfg, wallet, transport)
        self.account_graph = build_account_op_graph(AccountOpFlow(self))
        self.coin_graph = build_coin_graph(CoinFlow(self))
        self.last_run: Dict[str, Any] = {}
        logger.info(f"Wallet client ready: {len(wallet.accounts)} accounts, committee of {len(cfg.authorities)}")

    @property
    def params(self) -> PublicParams:
        if self._params is None:
            self._params = setup(self.cfg.params_seed, range_bits=self.cfg.range_bits)
        return self._params

    def persist(self) -> None:
        if self.wallet.path is not None:
            self.wallet.save()

    async def close(self) -> None:
        await self.transport.close()

    @staticmethod
    def _raise_from(state: Dict[str, Any], fallback: str) -> None:
        code = state.get("error_reason")
        reason = ReasonCode(code) if code else ReasonCode.NO_QUORUM
        if reason == ReasonCode.BAD_OWNER_SIGNATURE:
            reason = ReasonCode.OWNER_KEY_MISMATCH
        raise WalletError(
            reason,
            state.get("error_message") or fallback,
            expected_sequence=state.get("error_expected_sequence"),
            authority=state.get("error_authority"),
        )

    # ------------------------------------------------------------------
    # account operations
    # ------------------------------------------------------------------

    async def execute_account_op(
        self,
        account_id: UID,
        operation: Operation,
        new_key: Optional[KeyPair] = None,
    ) -> Certificate:
        """
        Vote, certify and confirm one operation on an owned account.

        The certificate is in the wallet file before this returns.

        Raises:
            WalletError: NoQuorum, OwnerKeyMismatch, EquivocationRefused, or the
                reason a super-minority of authorities rejected with
        """
        self.wallet.account(account_id)
        final = await self.account_graph.ainvoke(
            {"account_id": account_id, "operation": operation, "new_key": new_key}, config=GRAPH_CONFIG
        )
        self.last_run = final
        cert = final.get("certificate")
        if cert is None:
            self._raise_from(final, f"{type(operation).__name__} on {account_id} failed")
        return cert

    async def transfer(self, account_id: UID, recipient: UID, amount: int) -> Certificate:
        return await self.execute_account_op(account_id, Transfer(recipient, amount))

    async def change_key(self, account_id: UID, new_key: Optional[KeyPair] = None) -> Tuple[Certificate, KeyPair]:
        key = new_key or KeyPair.generate()
        cert = await self.execute_account_op(account_id, ChangeKey(key.public), new_key=key)
        return cert, key

    async def close_account(self, account_id: UID) -> Certificate:
        return await self.execute_account_op(account_id, CloseAccount())

    async def open_account(self, parent_id: UID, owner: PublicKey) -> Tuple[UID, Certificate]:
        """Certify OpenAccount(parent::n, owner) where n is the parent's next sequence number."""
        parent = self.wallet.account(parent_id)
        new_id = derive_child_id(parent_id, parent.next_sequence)
        if parent.pending is not None:
            pending = parent.pending.request.operation
            if isinstance(pending, OpenAccount):
                new_id = pending.new_id
        cert = await self.execute_account_op(parent_id, OpenAccount(new_id, owner))
        return new_id, cert

    async def open_own_accounts(self, parent_id: UID, count: int = 1) -> List[UID]:
        """Pre-provision `count` child accounts owned by fresh keys of this wallet."""
        opened = []
        for _ in range(count):
            key = KeyPair.generate()
            new_id, cert = await self.open_account(parent_id, key.public)
            self.wallet.add_account(new_id, key, opening=cert)
            opened.append(new_id)
        self.persist()
        return opened

    async def accept_opened_account(self, cert: Certificate, rotate: bool = False) -> UID:
        """
        Recipient side of broker account creation.

        The certificate must open a child account for one of this wallet's
        spare keys, and that key must not have been accepted before.

        Raises:
            WalletError(CertificateMismatch)
        """
        request = cert.value
        operation = getattr(request, "operation", None)
        if not isinstance(operation, OpenAccount):
            raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "not an OpenAccount certificate")
        spare = next((k for k in self.wallet.spare_keys if k.public == operation.new_owner), None)
        if spare is None:
            raise WalletError(ReasonCode.CERTIFICATE_MISMATCH, "certificate names a key this wallet did not generate")
        new_id = verify_opening_certificate(self.cfg, cert, spare.public, self.wallet.seen_owner_keys)
        self.wallet.take_spare_key(spare.public)
        self.wallet.add_account(new_id, spare, opening=cert)
        self.persist()
        logger.info(f"Accepted account {new_id}")
        if rotate:
            await self.change_key(new_id)
        return new_id

    # ------------------------------------------------------------------
    # coins
    # ------------------------------------------------------------------

    async def _run_coin_flow(self, kind: str, inputs, withdrawals, recipients) -> Tuple[Any, ...]:
        final = await self.coin_graph.ainvoke(
            {
                "coin_kind": kind,
                "inputs": list(inputs),
                "withdrawals": dict(withdrawals),
                "recipients": list(recipients),
            },
            config=GRAPH_CONFIG,
        )
        self.last_run = final
        if final.get("has_error") or "coins" not in final:
            self._raise_from(final, f"{kind} coin creation failed")
        return final["coins"]

    async def spend_and_create_coins(
        self,
        inputs: Sequence[OpaqueCoin],
        withdrawals: Mapping[UID, int],
        recipients: Sequence[Tuple[UID, int]],
    ) -> Tuple[OpaqueCoin, ...]:
        """
        Consume opaque `inputs` and public `withdrawals` into new opaque coins.

        Returns the coins in `recipients` order; coins for accounts this
        wallet owns are also added to it. Hand the others to their owners
        (see export_coin).

        Raises:
            WalletError: NoQuorum, ShareVerificationFailed, RecipientRejected,
                AlreadySpent
            CryptoError: ConservationViolated, ValueOutOfRange
        """
        return await self._run_coin_flow("opaque", inputs, withdrawals, recipients)

    async def create_transparent_coins(
        self,
        inputs: Sequence[TransparentCoin],
        withdrawals: Mapping[UID, int],
        recipients: Sequence[Tuple[UID, int]],
    ) -> Tuple[TransparentCoin, ...]:
        return await self._run_coin_flow("transparent", inputs, withdrawals, recipients)

    def import_coin(self, coin: OpaqueCoin) -> None:
        """
        Accept a coin someone minted for one of our accounts.

        Raises:
            WalletError(RecipientRejected): the credential does not verify
        """
        if not coin.verify(self.params, self.cfg.credential_key()):
            raise WalletError(ReasonCode.RECIPIENT_REJECTED, f"coin {coin.account_id}#{coin.index} does not verify")
        self.wallet.account(coin.account_id)
        self.wallet.add_coin(coin)
        self.persist()

    def import_transparent_coin(self, coin: TransparentCoin) -> None:
        if not coin.verify(self.cfg):
            raise WalletError(ReasonCode.RECIPIENT_REJECTED, "transparent coin certificate does not verify")
        self.wallet.account(coin.account_id)
        self.wallet.add_transparent_coin(coin)
        self.persist()

    async def redeem_coin(self, coin: OpaqueCoin, target: UID) -> Certificate:
        """SpendAndTransfer the coin's value into `target` (created empty if missing)."""
        cert = await self.execute_account_op(coin.account_id, SpendAndTransfer(target, coin.opening()))
        self.wallet.remove_coin(coin)
        self.persist()
        return cert

    async def redeem_transparent_coin(self, coin: TransparentCoin, target: UID) -> Certificate:
        cert = await self.execute_account_op(coin.account_id, SpendAndTransfer(target, coin.ref()))
        self.wallet.remove_transparent_coin(coin)
        self.persist()
        return cert

    # ------------------------------------------------------------------
    # queries and sync
    # ------------------------------------------------------------------

    async def sync_authority(self, authority: str, account_id: UID) -> int:
        """Replay known certificates so `authority` catches up on `account_id`. Returns the count replayed."""
        count = await self.synchronizer.sync_authority(authority, account_id)
        self.persist()
        return count

    async def sync_all(self, account_id: UID) -> Dict[str, int]:
        """Sync every reachable authority; unreachable ones map to -1."""
        results = {}
        for name in self.cfg.names:
            try:
                results[name] = await self.sync_authority(name, account_id)
            except (OSError, WalletError) as e:
                logger.warning(f"Sync of {name} on {account_id} failed: {e}")
                results[name] = -1
        return results

    async def resume_pending(self, account_id: UID) -> Optional[Certificate]:
        """Finish a request signed in an earlier run (e.g. after a crash)."""
        pending = self.wallet.account(account_id).pending
        if pending is None:
            return None
        return await self.execute_account_op(account_id, pending.request.operation)

    async def query_account(self, account_id: UID) -> Dict[str, AccountInfoResponse]:
        """AccountInfo from a quorum of authorities."""
        query = AccountInfoQuery(account_id)

        async def judge(name: str, reply: WireMessage):
            if isinstance(reply, AccountInfoResponse) and reply.account_id == account_id:
                return Verdict.ACCEPT, reply
            return Verdict.REJECT, reply

        result = await self.driver.broadcast("query", self.cfg.shard_of(account_id), lambda _: query, judge)
        result.raise_unless_reached(self.cfg, f"query of {account_id}")
        return result.accepted

    async def balance(self, account_id: UID) -> int:
        """Balance as seen by the most up-to-date authority in a quorum."""
        responses = await self.query_account(account_id)
        present = [r for r in responses.values() if r.present]
        if not present:
            return 0
        best = max(present, key=lambda r: (r.next_sequence, r.received_count))
        return best.balance
