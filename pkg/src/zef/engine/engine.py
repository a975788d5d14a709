"""
The account state machine run by every authority shard.

Requests are validated and voted on (at most one vote per account and
sequence number), certificates are executed in sequence order, and effects
on other accounts leave as CrossShardMessages for the router to deliver.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from ..coins.coconut import plain_verify
from ..coins.opaque import coin_key
from ..coins.params import PublicParams, setup
from ..core.certificates import verify_certificate
from ..core.committee import CommitteeConfig
from ..core.keys import KeyPair
from ..core.messages import (
    AccountInfoQuery,
    AccountInfoResponse,
    AuthenticatedRequest,
    Certificate,
    ChangeKey,
    CloseAccount,
    CoinRef,
    OpaqueCoinIndex,
    OpaqueCoinOpening,
    OpenAccount,
    Operation,
    Request,
    Spend,
    SpendAndTransfer,
    Transfer,
    TransparentCoinRef,
    Vote,
    operation_name,
)
from ..core.encoding import MAX_U64
from ..core.uid import UID
from ..errors import EngineError, ProtocolError, ReasonCode
from .state import AccountState, Activate, Credit, CrossShardMessage
from .store import AccountStore

logger = logging.getLogger(__name__)

StateLookup = Callable[[UID], Optional[AccountState]]
RetiredLookup = Callable[[UID], bool]


@dataclass(frozen=True)
class Validation:
    """Outcome of validate_operation. Falsy when the operation is unsafe."""

    ok: bool
    reason: Optional[ReasonCode] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


VALID = Validation(True)


def _reject(reason: ReasonCode, detail: str = "") -> Validation:
    return Validation(False, reason, detail or reason.value)


def debit_of(operation: Operation) -> int:
    """Public balance an operation takes out of its own account."""
    if isinstance(operation, (Transfer, Spend)):
        return operation.amount
    return 0


class AccountEngine:
    """
    One authority's view of the accounts on one shard.

    Args:
        cfg: committee configuration
        name: this authority's name in the committee
        key: this authority's signing key
        shard: shard index served, or None to accept every account
        store: backing store (a fresh one by default)
        params: public coin parameters (derived from cfg when omitted)
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        name: str,
        key: KeyPair,
        shard: Optional[int] = None,
        store: Optional[AccountStore] = None,
        params: Optional[PublicParams] = None,
    ):
        self.cfg = cfg
        self.name = name
        self.key = key
        self.shard = shard
        self.store = store if store is not None else AccountStore()
        self._params = params
        self.stats: Counter = Counter()
        self._genesis_ids = {UID(tuple(g.account_id)) for g in cfg.genesis}
        if store is None:
            self._init_genesis()

    @property
    def params(self) -> PublicParams:
        if self._params is None:
            self._params = setup(self.cfg.params_seed, range_bits=self.cfg.range_bits)
        return self._params

    def owns(self, account_id: UID) -> bool:
        return self.shard is None or self.cfg.shard_of(account_id) == self.shard

    def _init_genesis(self) -> None:
        for account_id in sorted(self._genesis_ids):
            if not self.owns(account_id):
                continue
            state = self.init_account(account_id, self.cfg.genesis_balance(account_id))
            state.owner = self.cfg.genesis_owner(account_id)
        logger.debug(f"{self.name}/{self.shard}: initialized {len(self.store)} genesis accounts")

    # ------------------------------------------------------------------
    # init / validate / execute
    # ------------------------------------------------------------------

    def init_account(self, account_id: UID, initial_balance: int = 0) -> AccountState:
        """Create the record with owner unset if it does not exist yet."""
        state = self.store.get(account_id)
        if state is not None:
            return state
        state = AccountState(balance=initial_balance, received_keys=self.store.retired_keys(account_id))
        self.store.put(account_id, state)
        return state

    def validate_operation(
        self, state: AccountState, account_id: UID, sequence: int, operation: Operation
    ) -> Validation:
        """Is `operation` safe to run as request number `sequence` of `account_id`?"""
        if isinstance(operation, OpenAccount):
            try:
                expected = account_id.child(sequence)
            except ProtocolError as e:
                return _reject(ReasonCode.LENGTH_EXCEEDED, e.message)
            if operation.new_id != expected:
                return _reject(ReasonCode.WRONG_CHILD_ID, f"expected child {expected}, got {operation.new_id}")
            return VALID

        if isinstance(operation, Transfer):
            if operation.amount == 0:
                return _reject(ReasonCode.INVALID_OPERATION, "transfer amount must be positive")
            if operation.amount > state.balance:
                return _reject(ReasonCode.INSUFFICIENT_FUNDS, f"balance {state.balance} < {operation.amount}")
            return VALID

        if isinstance(operation, (ChangeKey, CloseAccount)):
            return VALID

        if isinstance(operation, Spend):
            if operation.amount > state.balance:
                return _reject(ReasonCode.INSUFFICIENT_FUNDS, f"balance {state.balance} < {operation.amount}")
            if operation.coin is None:
                return VALID
            if isinstance(operation.coin, OpaqueCoinOpening):
                return _reject(ReasonCode.INVALID_OPERATION, "spend names opaque coins by index")
            return self._check_coin(state, account_id, operation.coin)

        if isinstance(operation, SpendAndTransfer):
            if isinstance(operation.coin, OpaqueCoinIndex):
                return _reject(ReasonCode.INVALID_OPERATION, "redemption needs the full coin opening")
            return self._check_coin(state, account_id, operation.coin)

        return _reject(ReasonCode.INVALID_OPERATION, f"unknown operation {operation_name(operation)}")

    def _check_coin(self, state: AccountState, account_id: UID, coin: CoinRef) -> Validation:
        if isinstance(coin, TransparentCoinRef):
            try:
                body = coin.body
            except ProtocolError:
                return _reject(ReasonCode.BAD_COIN_SIGNATURE, "transparent coin does not certify a coin body")
            if body.account_id != account_id or not verify_certificate(self.cfg, coin.certificate):
                return _reject(ReasonCode.BAD_COIN_SIGNATURE, "transparent coin certificate invalid")
        elif isinstance(coin, OpaqueCoinOpening):
            if coin.value > self.params.v_max:
                return _reject(ReasonCode.BAD_COIN_SIGNATURE, "coin value out of range")
            try:
                vk = self.cfg.credential_key()
            except ProtocolError as e:
                return _reject(ReasonCode.BAD_COIN_SIGNATURE, e.message)
            attributes = (coin_key(self.params, account_id, coin.index), coin.seed, coin.value)
            if not plain_verify(self.params, vk, coin.credential, attributes):
                return _reject(ReasonCode.BAD_COIN_SIGNATURE, "coin credential does not verify")

        if coin.marker() in state.spent:
            return _reject(ReasonCode.ALREADY_SPENT, "coin already spent")
        return VALID

    def execute_operation(
        self, account_id: UID, operation: Operation, cert: Certificate
    ) -> List[CrossShardMessage]:
        """Apply a certified operation. Only called at the right sequence number."""
        state = self.store.get(account_id)
        if state is None:
            raise EngineError(ReasonCode.INACTIVE_ACCOUNT, f"{account_id} has no state")
        debit = debit_of(operation)
        if debit > state.balance:
            # the quorum saw a credit this authority has not received yet
            raise EngineError(
                ReasonCode.BALANCE_OVERFLOW,
                f"{account_id}: debit of {debit} exceeds balance {state.balance}",
                authority=self.name,
            )
        state.balance -= debit
        out: List[CrossShardMessage] = []

        if isinstance(operation, OpenAccount):
            out.append(CrossShardMessage(operation.new_id, Activate(operation.new_owner), cert))
        elif isinstance(operation, Transfer):
            out.append(CrossShardMessage(operation.recipient, Credit(operation.amount), cert))
        elif isinstance(operation, ChangeKey):
            state.owner = operation.new_owner
        elif isinstance(operation, CloseAccount):
            state.owner = None
        elif isinstance(operation, Spend):
            if operation.coin is not None:
                state.spent.add(operation.coin.marker())
        elif isinstance(operation, SpendAndTransfer):
            state.spent.add(operation.coin.marker())
            if isinstance(operation.coin, TransparentCoinRef):
                value = operation.coin.body.value
            else:
                value = operation.coin.value
            out.append(CrossShardMessage(operation.recipient, Credit(value), cert))

        return out

    # ------------------------------------------------------------------
    # request / confirmation
    # ------------------------------------------------------------------

    def _check_shard(self, account_id: UID) -> None:
        if not self.owns(account_id):
            raise EngineError(
                ReasonCode.WRONG_SHARD,
                f"{account_id} lives on shard {self.cfg.shard_of(account_id)}, not {self.shard}",
                authority=self.name,
            )

    def handle_request(self, auth_request: AuthenticatedRequest) -> Vote:
        """
        Vote for a request, locking the account on it.

        Raises:
            EngineError: InactiveAccount, BadOwnerSignature, AccountLocked,
                WrongSequence, WrongShard, or the validation reason
        """
        request = auth_request.request
        account_id = request.account_id
        self._check_shard(account_id)
        state = self.store.get(account_id)
        if state is None or state.owner is None:
            self.stats["rejected"] += 1
            raise EngineError(ReasonCode.INACTIVE_ACCOUNT, f"{account_id} is not active", authority=self.name)
        if not auth_request.verify(state.owner):
            self.stats["rejected"] += 1
            raise EngineError(ReasonCode.BAD_OWNER_SIGNATURE, "owner signature invalid", authority=self.name)

        if state.pending is not None:
            if state.pending.to_bytes() == request.to_bytes():
                self.stats["revotes"] += 1
                return Vote.create(request, self.name, self.key)
            self.stats["rejected"] += 1
            raise EngineError(
                ReasonCode.ACCOUNT_LOCKED,
                f"{account_id} is locked on another request at {state.next_sequence}",
                expected_sequence=state.next_sequence,
                authority=self.name,
            )

        if request.sequence != state.next_sequence:
            self.stats["rejected"] += 1
            raise EngineError(
                ReasonCode.WRONG_SEQUENCE,
                f"expected sequence {state.next_sequence}, got {request.sequence}",
                expected_sequence=state.next_sequence,
                authority=self.name,
            )

        check = self.validate_operation(state, account_id, request.sequence, request.operation)
        if not check:
            self.stats["rejected"] += 1
            raise EngineError(check.reason, check.detail, authority=self.name)

        state.pending = request
        self.stats["votes"] += 1
        logger.debug(f"{self.name}: voted {operation_name(request.operation)} on {account_id}#{request.sequence}")
        return Vote.create(request, self.name, self.key)

    def handle_confirmation(self, cert: Certificate) -> List[CrossShardMessage]:
        """
        Execute a certified request if it is the next one for its account.

        Returns:
            cross-shard messages to deliver (empty on idempotent replays)

        Raises:
            EngineError: InvalidCertificate, InactiveAccount,
                MissingEarlierCertificates (with the expected sequence), WrongShard,
                BalanceOverflow (a debit this authority cannot fund yet)
        """
        if not isinstance(cert.value, Request) or not verify_certificate(self.cfg, cert):
            raise EngineError(ReasonCode.INVALID_CERTIFICATE, "certificate does not verify", authority=self.name)
        request = cert.value
        account_id = request.account_id
        self._check_shard(account_id)

        state = self.store.get(account_id)
        if state is None:
            if self.store.is_retired(account_id):
                return []
            raise EngineError(ReasonCode.INACTIVE_ACCOUNT, f"{account_id} is unknown", authority=self.name)
        if request.sequence < state.next_sequence:
            return []
        if state.owner is None:
            if self.store.is_retired(account_id):
                return []
            raise EngineError(ReasonCode.INACTIVE_ACCOUNT, f"{account_id} is not active", authority=self.name)
        if request.sequence > state.next_sequence:
            raise EngineError(
                ReasonCode.MISSING_EARLIER_CERTIFICATES,
                f"{account_id} expects sequence {state.next_sequence} before {request.sequence}",
                expected_sequence=state.next_sequence,
                authority=self.name,
            )

        messages = self.execute_operation(account_id, request.operation, cert)
        state.next_sequence += 1
        state.pending = None
        state.confirmed.append(cert)
        self.stats["confirmations"] += 1

        if state.owner is None:
            self.store.retire(account_id)
            logger.info(f"{self.name}: {account_id} closed and deleted")
        return messages

    def handle_cross_shard(self, msg: CrossShardMessage) -> None:
        """Apply an Activate or Credit exactly once per originating certificate."""
        target = msg.target
        self._check_shard(target)
        key = msg.origin_digest
        state = self.store.get(target)

        if state is None and self.store.is_retired(target):
            if key in self.store.retired_keys(target):
                return
            if isinstance(msg.effect, Activate):
                logger.info(f"{self.name}: ignoring activation of deleted account {target}")
                return

        state = self.init_account(target)
        if key in state.received_keys:
            self.stats["duplicate_deliveries"] += 1
            return
        if isinstance(msg.effect, Credit) and state.balance + msg.effect.amount > MAX_U64:
            raise EngineError(
                ReasonCode.BALANCE_OVERFLOW,
                f"credit of {msg.effect.amount} to {target} would pass the u64 limit",
                authority=self.name,
            )

        if isinstance(msg.effect, Activate):
            if self.store.is_retired(target):
                logger.info(f"{self.name}: ignoring activation of deleted account {target}")
                return
            state.owner = msg.effect.owner
        else:
            state.balance += msg.effect.amount
        state.received.append(msg.certificate)
        state.received_keys.add(key)
        self.stats["cross_shard"] += 1

    # ------------------------------------------------------------------
    # deletion
    # ------------------------------------------------------------------

    def can_become_active(
        self,
        account_id: UID,
        lookup: Optional[StateLookup] = None,
        retired: Optional[RetiredLookup] = None,
    ) -> bool:
        """
        Active now, or some ancestor chain can still open it.

        `lookup`/`retired` let a node answer for ancestors living on other
        shards; both default to this engine's store. Missing ancestors count
        as inactive with next_sequence 0. A lookup raising KeyError means
        "not visible from here" and the answer is True, so nothing is
        deleted on partial information.
        """
        lookup = lookup or self.store.get
        retired = retired or self.store.is_retired
        current = account_id
        try:
            while True:
                if retired(current):
                    return False
                state = lookup(current)
                if state is not None and state.is_active:
                    return True
                parent = current.parent()
                if parent is None:
                    return False
                parent_state = lookup(parent)
                parent_next = parent_state.next_sequence if parent_state is not None else 0
                if parent_next > current.last:
                    return False
                current = parent
        except KeyError:
            return True

    def sweep(
        self,
        lookup: Optional[StateLookup] = None,
        retired: Optional[RetiredLookup] = None,
    ) -> List[UID]:
        """Delete ownerless records that can never become active again."""
        removed: List[UID] = []
        for account_id, state in list(self.store.items()):
            if state.owner is not None or account_id in self._genesis_ids:
                continue
            if not self.can_become_active(account_id, lookup, retired):
                self.store.delete(account_id)
                removed.append(account_id)
        if removed:
            logger.info(f"{self.name}/{self.shard}: sweep deleted {len(removed)} accounts")
        self.stats["swept"] += len(removed)
        return removed

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def account_info(self, query: AccountInfoQuery) -> AccountInfoResponse:
        state = self.store.get(query.account_id)
        if state is None:
            return AccountInfoResponse(query.account_id, present=False)
        return AccountInfoResponse(
            account_id=query.account_id,
            present=True,
            owner=state.owner,
            balance=state.balance,
            next_sequence=state.next_sequence,
            pending=state.pending,
            certificates=tuple(state.confirmed[query.from_index:]),
            spent=tuple(sorted(state.spent)),
            received_count=len(state.received),
        )

    def get_stats(self) -> Dict[str, int]:
        return {"accounts": len(self.store), "retired": self.store.retired_count, **self.stats}
