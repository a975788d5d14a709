"""
Scripted clients for the simulator.

A SimClient runs the user side of the protocol as callbacks on the
simulated network: broadcast, collect a quorum, aggregate, confirm, and
replay history to authorities that answer as if they were behind. It also
plays the adversarial parts of a script (equivocation, coin request
replays); those bypass the wallet's equivocation guard on purpose.
"""

import logging
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Deque, Dict, List, Optional, Set, Tuple

from ..authority.keyfile import credential_keys_by_index
from ..authority.wire import Ack, CoinShares, ErrorReply, WireMessage, decode_body, encode_body
from ..coins.coconut import plain_verify, unblind
from ..coins.opaque import CreateAnonymousCoins, OpaqueCoin, OutputSpec, coin_request, finalize_coins
from ..core.certificates import aggregate_certificate
from ..core.committee import CommitteeConfig
from ..core.keys import KeyPair
from ..core.messages import (
    Certificate,
    ChangeKey,
    CloseAccount,
    OpenAccount,
    Operation,
    Request,
    Spend,
    SpendAndTransfer,
    Transfer,
    Vote,
)
from ..core.uid import UID
from ..engine.spendable import CoinRecord
from ..errors import ReasonCode, ZefError
from .network import Envelope, client_endpoint
from .scenario import ScriptOp, key_from_seed

if TYPE_CHECKING:
    from .runner import Simulation

logger = logging.getLogger(__name__)

LAGGING_REASONS = {
    ReasonCode.MISSING_EARLIER_CERTIFICATES,
    ReasonCode.INACTIVE_ACCOUNT,
    ReasonCode.BALANCE_OVERFLOW,
}
BEHIND_REASONS = {ReasonCode.WRONG_SEQUENCE, ReasonCode.ACCOUNT_LOCKED}

Done = Callable[[Optional[Certificate], Optional[str]], None]


def is_lagging(reply: ErrorReply, request: Request) -> bool:
    """Would replaying history change this authority's answer?"""
    if reply.reason in LAGGING_REASONS:
        return True
    if reply.reason in BEHIND_REASONS:
        return reply.expected_sequence is not None and reply.expected_sequence < request.sequence
    return False


class CertificateLibrary:
    """Every certificate honest clients have formed, by account and sequence."""

    def __init__(self) -> None:
        self.chains: Dict[UID, Dict[int, Certificate]] = defaultdict(dict)

    def add(self, cert: Certificate) -> None:
        request = cert.request
        self.chains[request.account_id][request.sequence] = cert

    def chain(self, account_id: UID) -> List[Certificate]:
        chain = self.chains.get(account_id, {})
        return [chain[n] for n in sorted(chain)]

    def history(self, account_id: UID) -> List[Certificate]:
        """The chains of account_id and all its ancestors, oldest ancestor first."""
        lineage: List[UID] = []
        current: Optional[UID] = account_id
        while current is not None:
            lineage.append(current)
            current = current.parent()
        certs: List[Certificate] = []
        for uid in reversed(lineage):
            certs.extend(self.chain(uid))
        return certs

    def all(self) -> List[Certificate]:
        certs: List[Certificate] = []
        for account_id in sorted(self.chains, key=lambda uid: (len(uid.path), uid.path)):
            certs.extend(self.chain(account_id))
        return certs


@dataclass
class Broadcast:
    """One message pushed to every authority of a shard until a quorum answers."""

    kind: str
    message: WireMessage
    shard: int
    on_reply: Callable[[str, WireMessage], None]
    on_give_up: Callable[[], None]
    first_targets: Optional[List[str]] = None
    done: Set[str] = field(default_factory=set)
    rejected: Dict[str, ReasonCode] = field(default_factory=dict)
    attempts: int = 0
    finished: bool = False


@dataclass
class OpOutcome:
    """How one script op ended."""

    index: int
    kind: str
    account: str
    status: str = "pending"  # pending / certified / failed / skipped
    reason: Optional[str] = None
    adversarial: bool = False
    certificates: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "account": self.account,
            "status": self.status,
            "reason": self.reason,
            "adversarial": self.adversarial,
            "certificates": self.certificates,
        }


class SimClient:
    """
    Runs a script against the simulated committee.

    Args:
        name: endpoint name
        sim: the simulation (network, committee, shared certificate library)
        keys: genesis account keys this client starts with
        script: ops to run
    """

    def __init__(self, name: str, sim: "Simulation", keys: Dict[UID, KeyPair], script: List[ScriptOp]):
        self.name = name
        self.sim = sim
        self.cfg: CommitteeConfig = sim.cfg
        self.endpoint = client_endpoint(name)
        self.rng = random.Random(f"{sim.scenario.seed}:{name}")
        self.keys: Dict[UID, KeyPair] = dict(keys)
        self.next_sequence: Dict[UID, int] = {uid: 0 for uid in keys}
        self.coins: List[OpaqueCoin] = []
        self.outcomes: List[OpOutcome] = []
        self._queues: Dict[UID, Deque[Tuple[int, ScriptOp]]] = defaultdict(deque)
        self._busy: Set[UID] = set()
        self._waiting: Set[UID] = set()
        self._refs: Dict[int, Broadcast] = {}
        self._next_ref = 0
        self._last_sync: Dict[Tuple[str, UID], int] = {}
        self._tainted: Set[UID] = set()
        self._closed: Set[UID] = set()
        for index, op in enumerate(script):
            self._queues[op.uid].append((index, op))
            self.outcomes.append(OpOutcome(index, op.kind, op.account, adversarial=op.adversarial))
        sim.net.register(self.endpoint, self.on_frame)

    # ------------------------------------------------------------------
    # scheduling script ops
    # ------------------------------------------------------------------

    def start(self) -> None:
        for account_id in sorted(self._queues):
            self._advance(account_id)

    def busy(self) -> bool:
        return any(self._queues.values()) or bool(self._busy)

    def _advance(self, account_id: UID) -> None:
        if account_id in self._busy or not self._queues[account_id]:
            return
        if account_id not in self.keys:
            if account_id in self._closed:
                index, _ = self._queues[account_id].popleft()
                self._busy.add(account_id)
                self._finish(index, "skipped", "account was closed")
                return
            self._waiting.add(account_id)
            return
        index, op = self._queues[account_id][0]
        now = self.sim.net.now
        if op.at > now:
            if account_id not in self._waiting:
                self._waiting.add(account_id)
                self.sim.net.set_timer(op.at - now, lambda: self._wake(account_id))
            return
        self._waiting.discard(account_id)
        self._queues[account_id].popleft()
        self._busy.add(account_id)
        self._run(index, op)

    def abandon(self) -> None:
        """Mark whatever never ran once the network went quiet."""
        for account_id, queue in self._queues.items():
            while queue:
                index, _ = queue.popleft()
                outcome = self.outcomes[index]
                if account_id not in self.keys:
                    outcome.status, outcome.reason = "skipped", "account never became owned"
                else:
                    outcome.status, outcome.reason = "failed", "stalled"
        for outcome in self.outcomes:
            if outcome.status == "pending":
                outcome.status, outcome.reason = "failed", "stalled"

    def _wake(self, account_id: UID) -> None:
        self._waiting.discard(account_id)
        self._advance(account_id)

    def _finish(self, index: int, status: str, reason: Optional[str] = None) -> None:
        outcome = self.outcomes[index]
        outcome.status = status
        outcome.reason = reason
        account_id = UID.parse(outcome.account)
        if status == "failed" or outcome.adversarial:
            self._tainted.add(account_id)
        self._busy.discard(account_id)
        logger.debug(f"{self.name}: op #{index} {outcome.kind} on {account_id} {status} {reason or ''}")
        self._advance(account_id)

    def _run(self, index: int, op: ScriptOp) -> None:
        account_id = op.uid
        outcome = self.outcomes[index]
        if account_id in self._tainted and not op.adversarial:
            self._finish(index, "skipped", "account unusable after an earlier failure")
            return

        def done(cert: Optional[Certificate], reason: Optional[str]) -> None:
            if cert is not None:
                outcome.certificates += 1
            self._finish(index, "certified" if cert is not None else "failed", reason)

        if op.kind == "transfer":
            self._execute(account_id, Transfer(UID.parse(op.recipient), op.amount), done)
        elif op.kind == "open_account":
            child = UID.parse(op.new_id)
            child_key = key_from_seed(op.key_seed)
            self._execute(account_id, OpenAccount(child, child_key.public), done, child_key=child_key)
        elif op.kind == "change_key":
            new_key = key_from_seed(op.key_seed)
            self._execute(account_id, ChangeKey(new_key.public), done, new_key=new_key)
        elif op.kind == "close_account":
            self._execute(account_id, CloseAccount(), done)
        elif op.kind == "anon_coins":
            self._anon_coins(index, op)
        elif op.kind == "equivocate":
            self._equivocate(index, op)

    # ------------------------------------------------------------------
    # network plumbing
    # ------------------------------------------------------------------

    def _send(self, authority: str, shard: int, message: WireMessage, broadcast: Optional[Broadcast]) -> None:
        ref = 0
        if broadcast is not None:
            self._next_ref += 1
            ref = self._next_ref
            self._refs[ref] = broadcast
        self.sim.net.send(self.endpoint, (authority, shard), encode_body(message), ref=ref)

    def on_frame(self, envelope: Envelope) -> None:
        broadcast = self._refs.pop(envelope.ref, None)
        if broadcast is None or broadcast.finished:
            return
        try:
            reply = decode_body(envelope.body)
        except ZefError as e:
            logger.warning(f"{self.name}: undecodable reply from {envelope.src}: {e}")
            return
        broadcast.on_reply(envelope.src[0], reply)

    def _broadcast(self, broadcast: Broadcast) -> Broadcast:
        targets = broadcast.first_targets or self.cfg.names
        for name in targets:
            self._send(name, broadcast.shard, broadcast.message, broadcast)
        self.sim.net.set_timer(self.sim.scenario.retry_interval, lambda: self._retry(broadcast))
        return broadcast

    def _retry(self, broadcast: Broadcast) -> None:
        if broadcast.finished:
            return
        broadcast.attempts += 1
        if broadcast.attempts >= self.sim.scenario.max_attempts:
            broadcast.finished = True
            logger.info(f"{self.name}: giving up on {broadcast.kind} after {broadcast.attempts} attempts")
            broadcast.on_give_up()
            return
        for name in self.cfg.names:
            if name not in broadcast.done and name not in broadcast.rejected:
                self._send(name, broadcast.shard, broadcast.message, broadcast)
        self.sim.net.set_timer(self.sim.scenario.retry_interval, lambda: self._retry(broadcast))

    def _rejected_too_much(self, broadcast: Broadcast) -> bool:
        return sum(self.cfg.power_of(n) for n in broadcast.rejected) > self.cfg.fault_bound

    def _sync(self, authority: str, account_id: UID) -> None:
        """Replay the certificates of account_id and its ancestors to one authority."""
        key = (authority, account_id)
        now = self.sim.net.now
        last = self._last_sync.get(key)
        if last is not None and now - last < self.sim.scenario.retry_interval:
            return
        self._last_sync[key] = now
        history = self.sim.library.history(account_id)
        self.sim.syncs += 1
        for cert in history:
            self._send(authority, self.cfg.shard_of(cert.request.account_id), cert, None)

    # ------------------------------------------------------------------
    # one account operation: vote, certify, confirm
    # ------------------------------------------------------------------

    def _vote_broadcast(
        self,
        request: Request,
        key: KeyPair,
        on_quorum: Callable[[Dict[str, bytes]], None],
        on_fail: Callable[[str], None],
        first_targets: Optional[List[str]] = None,
    ) -> Broadcast:
        votes: Dict[str, bytes] = {}
        auth = request.signed_by(key)

        def on_reply(name: str, reply: WireMessage) -> None:
            if isinstance(reply, Vote):
                if reply.authority == name and reply.value == request and reply.verify(self.cfg.public_key(name)):
                    votes[name] = reply.signature
                    broadcast.done.add(name)
                    if self.cfg.is_quorum(votes):
                        broadcast.finished = True
                        on_quorum(dict(votes))
                return
            if isinstance(reply, ErrorReply):
                if is_lagging(reply, request):
                    self._sync(name, request.account_id)
                    return
                broadcast.rejected[name] = reply.reason
                if self._rejected_too_much(broadcast):
                    broadcast.finished = True
                    on_fail(reply.reason.value)

        broadcast = Broadcast(
            "vote",
            auth,
            self.cfg.shard_of(request.account_id),
            on_reply,
            lambda: on_fail(ReasonCode.NO_QUORUM.value),
            first_targets=first_targets,
        )
        return self._broadcast(broadcast)

    def _confirm(self, cert: Certificate, on_done: Done) -> None:
        request = cert.request
        acks: Set[str] = set()

        def on_reply(name: str, reply: WireMessage) -> None:
            if isinstance(reply, Ack):
                acks.add(name)
                broadcast.done.add(name)
                if self.cfg.is_quorum(acks):
                    broadcast.finished = True
                    on_done(cert, None)
            elif isinstance(reply, ErrorReply) and reply.reason in LAGGING_REASONS:
                self._sync(name, request.account_id)

        def give_up() -> None:
            logger.warning(f"{self.name}: {request.account_id}#{request.sequence} certified but not confirmed by a quorum")
            on_done(cert, None)

        broadcast = Broadcast("confirm", cert, self.cfg.shard_of(request.account_id), on_reply, give_up)
        self._broadcast(broadcast)

    def _certified(
        self,
        request: Request,
        votes: Dict[str, bytes],
        new_key: Optional[KeyPair] = None,
        child_key: Optional[KeyPair] = None,
    ) -> Certificate:
        cert = aggregate_certificate(self.cfg, request, sorted(votes.items()))
        self.sim.observe_certificate(cert)
        account_id = request.account_id
        operation = request.operation
        self.next_sequence[account_id] = request.sequence + 1
        if isinstance(operation, ChangeKey) and new_key is not None:
            self.keys[account_id] = new_key
        elif isinstance(operation, CloseAccount):
            self.keys.pop(account_id, None)
            self._closed.add(account_id)
        elif isinstance(operation, OpenAccount) and child_key is not None:
            self.keys[operation.new_id] = child_key
            self.next_sequence[operation.new_id] = 0
            if operation.new_id in self._waiting:
                self._waiting.discard(operation.new_id)
                self._advance(operation.new_id)
        return cert

    def _execute(
        self,
        account_id: UID,
        operation: Operation,
        on_done: Done,
        new_key: Optional[KeyPair] = None,
        child_key: Optional[KeyPair] = None,
    ) -> None:
        """Certify and confirm one operation at the account's next sequence number."""
        request = Request(account_id, self.next_sequence[account_id], operation)

        def on_quorum(votes: Dict[str, bytes]) -> None:
            cert = self._certified(request, votes, new_key, child_key)
            self._confirm(cert, on_done)

        self._vote_broadcast(request, self.keys[account_id], on_quorum, lambda reason: on_done(None, reason))

    # ------------------------------------------------------------------
    # adversarial: two requests at one sequence number
    # ------------------------------------------------------------------

    def _equivocate(self, index: int, op: ScriptOp) -> None:
        account_id = op.uid
        sequence = self.next_sequence[account_id]
        key = self.keys[account_id]
        first = Request(account_id, sequence, Transfer(UID.parse(op.recipient), op.amount))
        second = Request(account_id, sequence, Transfer(UID.parse(op.conflicting_recipient), op.amount))
        names = self.cfg.names
        half = len(names) // 2
        pending: List[Broadcast] = []
        state = {"failures": 0}
        outcome = self.outcomes[index]

        def on_quorum_for(request: Request):
            def on_quorum(votes: Dict[str, bytes]) -> None:
                for other in pending:
                    other.finished = True
                cert = self._certified(request, votes)
                outcome.certificates += 1
                self._confirm(cert, lambda c, r: self._finish(index, "certified"))

            return on_quorum

        def on_fail(reason: str) -> None:
            state["failures"] += 1
            if state["failures"] == len(pending):
                self._finish(index, "failed", reason)

        pending.append(self._vote_broadcast(first, key, on_quorum_for(first), on_fail, first_targets=names[:half]))
        pending.append(self._vote_broadcast(second, key, on_quorum_for(second), on_fail, first_targets=names[half:]))

    # ------------------------------------------------------------------
    # opaque coins: withdraw, request (and replay), redeem
    # ------------------------------------------------------------------

    def _anon_coins(self, index: int, op: ScriptOp) -> None:
        sim = self.sim
        account_id = op.uid
        recipient = UID.parse(op.recipient) if op.recipient else account_id
        outputs = [OutputSpec(recipient, self.rng.getrandbits(63), value) for value in op.outputs]
        try:
            kept, bundle = coin_request(sim.params, self.cfg.credential_key(), [], [op.amount], outputs)
        except ZefError as e:
            self._finish(index, "failed", e.reason.value)
            return
        outcome = self.outcomes[index]

        def after_spend(cert: Optional[Certificate], reason: Optional[str]) -> None:
            if cert is None:
                self._finish(index, "failed", reason)
                return
            outcome.certificates += 1
            message = CreateAnonymousCoins((cert,), bundle)
            self._request_coins(message, kept, 1 + op.replays, None, after_coins)

        def after_coins(coins: Optional[Tuple[OpaqueCoin, ...]], reason: Optional[str]) -> None:
            if coins is None:
                self._finish(index, "failed", reason)
                return
            if op.redeem_to is None or recipient != account_id:
                self._finish(index, "certified")
                return
            self._redeem(list(coins), UID.parse(op.redeem_to), index)

        self._execute(account_id, Spend(op.amount, None, bundle.digest()), after_spend)

    def _request_coins(
        self,
        message: CreateAnonymousCoins,
        kept,
        rounds: int,
        previous: Optional[Tuple[OpaqueCoin, ...]],
        on_coins: Callable[[Optional[Tuple[OpaqueCoin, ...]], Optional[str]], None],
    ) -> None:
        """Collect t verified share sets and assemble; repeat the same request `rounds` times."""
        cfg, params = self.cfg, self.sim.params
        shares: Dict[int, tuple] = {}

        def on_reply(name: str, reply: WireMessage) -> None:
            if isinstance(reply, CoinShares):
                key = cfg.authority_credential_key(name)
                good = reply.authority == name and len(reply.shares) == len(kept) and all(
                    plain_verify(params, key, unblind(params, share, secret.blinding, key), secret.spec.attributes(params))
                    for share, secret in zip(reply.shares, kept)
                )
                if not good:
                    broadcast.rejected[name] = ReasonCode.SHARE_VERIFICATION_FAILED
                    return
                broadcast.done.add(name)
                shares[cfg.authorities[name].credential_index] = reply.shares
                if len(shares) >= cfg.credential_threshold:
                    broadcast.finished = True
                    assemble()
            elif isinstance(reply, ErrorReply):
                broadcast.rejected[name] = reply.reason
                if self._rejected_too_much(broadcast):
                    broadcast.finished = True
                    on_coins(None, reply.reason.value)

        def assemble() -> None:
            try:
                coins = finalize_coins(
                    params, cfg.credential_key(), credential_keys_by_index(cfg), shares, kept, cfg.credential_threshold
                )
            except ZefError as e:
                on_coins(None, e.reason.value)
                return
            if previous is not None and [c.credential for c in coins] != [c.credential for c in previous]:
                self.sim.replay_mismatches += 1
            for coin in coins:
                self.sim.observe_coin(CoinRecord(coin.account_id, coin.index_ref().marker(), coin.value))
            if rounds > 1:
                self._request_coins(message, kept, rounds - 1, coins, on_coins)
                return
            self.coins.extend(coins)
            on_coins(coins, None)

        shard = cfg.shard_of(message.certificates[0].request.account_id)
        broadcast = Broadcast("coins", message, shard, on_reply, lambda: on_coins(None, ReasonCode.NO_QUORUM.value))
        self._broadcast(broadcast)

    def _redeem(self, coins: List[OpaqueCoin], target: UID, index: int) -> None:
        if not coins:
            self._finish(index, "certified")
            return
        coin = coins[0]
        outcome = self.outcomes[index]

        def done(cert: Optional[Certificate], reason: Optional[str]) -> None:
            if cert is None:
                self._finish(index, "failed", reason)
                return
            outcome.certificates += 1
            self.coins = [c for c in self.coins if c.index != coin.index]
            self._redeem(coins[1:], target, index)

        self._execute(coin.account_id, SpendAndTransfer(target, coin.opening()), done)
