"""
Node implementations for the wallet graphs.

AccountOpFlow drives one account operation through vote collection,
certificate aggregation and confirmation. CoinFlow spends inputs and turns
the Spend certificates into new coins (opaque or transparent).

Every node takes the graph state and returns the keys it changes.
"""

import logging
import secrets
import time
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

from ..authority.keyfile import credential_keys_by_index
from ..authority.wire import Ack, CoinShares, CoinVotes, ErrorReply, WireMessage
from ..coins.coconut import plain_verify, unblind
from ..coins.opaque import CreateAnonymousCoins, OpaqueCoin, OutputSpec, coin_request, finalize_coins
from ..coins.transparent import (
    CreateTransparentCoins,
    TransparentCoin,
    build_transparent_spends,
    collect_transparent_coins,
    new_coin_body,
)
from ..config import settings
from ..core.certificates import aggregate_certificate
from ..core.messages import ChangeKey, Request, Spend, SpendAndTransfer, Transfer, Vote
from ..core.uid import UID
from ..errors import CryptoError, ReasonCode, WalletError, ZefError
from .quorum import Verdict
from .sync import credits_account

if TYPE_CHECKING:
    from .client import ZefClient

logger = logging.getLogger(__name__)

# rejections a replay of history can cure
LAGGING_REASONS = {
    ReasonCode.MISSING_EARLIER_CERTIFICATES,
    ReasonCode.INACTIVE_ACCOUNT,
    ReasonCode.BALANCE_OVERFLOW,
}


def new_coin_index() -> int:
    return secrets.randbits(63)


def _unexpected(name: str, reply: WireMessage) -> Tuple[Verdict, ErrorReply]:
    return Verdict.REJECT, ErrorReply(ReasonCode.INVALID_OPERATION, f"unexpected {type(reply).__name__}", authority=name)


class AccountOpFlow:
    """Vote, certify, confirm - one account operation."""

    def __init__(self, client: "ZefClient"):
        self.client = client

    def _is_lagging(self, reply: ErrorReply, request: Request) -> bool:
        if reply.reason in LAGGING_REASONS:
            return True
        if reply.reason == ReasonCode.WRONG_SEQUENCE:
            return reply.expected_sequence is not None and reply.expected_sequence < request.sequence
        if reply.reason == ReasonCode.INSUFFICIENT_FUNDS:
            # only worth a sync when we hold credits the authority may lack
            return any(credits_account(c, request.account_id) for c in self.client.wallet.received)
        return False

    async def prepare(self, state: Dict[str, Any]) -> Dict[str, Any]:
        wallet = self.client.wallet
        account_id: UID = state["account_id"]
        auth = wallet.sign_request(account_id, state["operation"])
        new_key = state.get("new_key")
        if isinstance(state["operation"], ChangeKey) and new_key is not None:
            wallet.account(account_id).staged_key = new_key
        self.client.persist()
        logger.debug(f"Signed {type(state['operation']).__name__} for {account_id} at {auth.request.sequence}")
        return {
            "auth_request": auth,
            "votes": {},
            "acks": {},
            "phase": "votes",
            "lagging": [],
            "sync_rounds": 0,
            "started_at": time.perf_counter(),
            "workflow_status": "signed",
        }

    async def collect_votes(self, state: Dict[str, Any]) -> Dict[str, Any]:
        cfg = self.client.cfg
        auth = state["auth_request"]
        request: Request = auth.request
        lagging: List[str] = []

        async def judge(name: str, reply: WireMessage):
            if isinstance(reply, Vote):
                if reply.authority == name and reply.value == request and reply.verify(cfg.public_key(name)):
                    return Verdict.ACCEPT, reply.signature
                return Verdict.REJECT, ErrorReply(ReasonCode.INVALID_VOTE, "vote does not verify", authority=name)
            if isinstance(reply, ErrorReply):
                if self._is_lagging(reply, request):
                    lagging.append(name)
                return Verdict.REJECT, reply
            return _unexpected(name, reply)

        result = await self.client.driver.broadcast(
            "request", cfg.shard_of(request.account_id), lambda _: auth, judge, already=state.get("votes")
        )
        if result.reached:
            return {"votes": result.accepted, "lagging": [], "workflow_status": "voted"}
        if lagging:
            return {"votes": result.accepted, "lagging": lagging, "workflow_status": "short"}

        if not result.accepted and set(result.rejected) == set(cfg.names):
            self.client.wallet.discard_pending(request.account_id)
            self.client.persist()
        result.raise_unless_reached(cfg, f"request {request.account_id}@{request.sequence}")
        return {}

    async def sync(self, state: Dict[str, Any]) -> Dict[str, Any]:
        account_id = state["account_id"]
        for name in state.get("lagging", []):
            try:
                await self.client.synchronizer.sync_authority(name, account_id)
            except (OSError, ZefError) as e:
                logger.warning(f"Could not sync {name} on {account_id}: {e}")
        self.client.persist()
        return {"lagging": [], "sync_rounds": state.get("sync_rounds", 0) + 1}

    async def certify(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        request: Request = state["auth_request"].request
        cert = aggregate_certificate(client.cfg, request, sorted(state["votes"].items()))
        client.wallet.record_certificate(cert)
        operation = request.operation
        if isinstance(operation, (Transfer, SpendAndTransfer)) and operation.recipient in client.wallet.accounts:
            client.wallet.record_received(cert)
        client.persist()
        logger.info(f"Certified {type(operation).__name__} on {request.account_id}@{request.sequence}")
        return {"certificate": cert, "phase": "confirm", "workflow_status": "certified"}

    async def confirm(self, state: Dict[str, Any]) -> Dict[str, Any]:
        cfg = self.client.cfg
        cert = state["certificate"]
        request: Request = cert.request
        lagging: List[str] = []
        first_ack: List[float] = []

        async def judge(name: str, reply: WireMessage):
            if isinstance(reply, Ack):
                if not first_ack:
                    first_ack.append(time.perf_counter())
                return Verdict.ACCEPT, reply
            if isinstance(reply, ErrorReply):
                if reply.reason in LAGGING_REASONS:
                    lagging.append(name)
                return Verdict.REJECT, reply
            return _unexpected(name, reply)

        result = await self.client.driver.broadcast(
            "confirm",
            cfg.shard_of(request.account_id),
            lambda _: cert,
            judge,
            already=state.get("acks"),
            linger=settings.quorum_linger_seconds,
        )
        updates: Dict[str, Any] = {"acks": result.accepted}
        if first_ack and state.get("first_ack_at") is None:
            updates["first_ack_at"] = first_ack[0]
        for name, ack in result.accepted.items():
            self.client.wallet.advance_cursor(name, request.account_id, ack.next_sequence)
        if result.reached:
            updates["workflow_status"] = "confirmed"
        elif lagging:
            updates.update(lagging=lagging, workflow_status="short")
        else:
            result.raise_unless_reached(cfg, f"confirmation of {request.account_id}@{request.sequence}")
        return updates

    async def finish(self, state: Dict[str, Any]) -> Dict[str, Any]:
        self.client.persist()
        confirmed = state.get("workflow_status") == "confirmed"
        return {"workflow_status": "completed" if confirmed else "certified_unconfirmed"}


class CoinFlow:
    """Spend inputs, then mint the outputs from the Spend certificates."""

    def __init__(self, client: "ZefClient"):
        self.client = client

    # ------------------------------------------------------------------
    # plan
    # ------------------------------------------------------------------

    async def plan(self, state: Dict[str, Any]) -> Dict[str, Any]:
        if state["coin_kind"] == "transparent":
            return self._plan_transparent(state)
        return self._plan_opaque(state)

    def _plan_opaque(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        inputs: List[OpaqueCoin] = list(state.get("inputs", []))
        withdrawals: Dict[UID, int] = dict(state.get("withdrawals", {}))
        for coin in inputs:
            client.wallet.account(coin.account_id)
        for account_id in withdrawals:
            client.wallet.account(account_id)

        # one Spend per input coin; a withdrawal rides on the account's first coin
        spends: List[Tuple[UID, int, Optional[OpaqueCoin]]] = []
        unassigned = dict(withdrawals)
        for coin in inputs:
            spends.append((coin.account_id, unassigned.pop(coin.account_id, 0), coin))
        for account_id, amount in sorted(unassigned.items()):
            if amount > 0:
                spends.append((account_id, amount, None))

        outputs = [OutputSpec(uid, new_coin_index(), value) for uid, value in state["recipients"]]
        kept, bundle = coin_request(
            client.params,
            client.cfg.credential_key(),
            [coin for _, _, coin in spends if coin is not None],
            [amount for _, amount, _ in spends],
            outputs,
        )
        h = bundle.digest()
        spend_ops = [
            (account_id, Spend(amount, coin.index_ref() if coin else None, h)) for account_id, amount, coin in spends
        ]
        return {
            "bundle": bundle,
            "output_secrets": kept,
            "spend_ops": spend_ops,
            "spend_count": len(spend_ops),
            "spend_certificates": [],
            "started_at": time.perf_counter(),
            "workflow_status": "planned",
        }

    def _plan_transparent(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        inputs: List[TransparentCoin] = list(state.get("inputs", []))
        withdrawals: Dict[UID, int] = dict(state.get("withdrawals", {}))
        for coin in inputs:
            client.wallet.account(coin.account_id)
        for account_id in withdrawals:
            client.wallet.account(account_id)
        outputs = [new_coin_body(uid, value) for uid, value in state["recipients"]]
        plan = build_transparent_spends(inputs, withdrawals, outputs, client.cfg.range_bits)
        return {
            "transparent_outputs": plan.outputs,
            "spend_ops": list(plan.spends),
            "spend_count": len(plan.spends),
            "spend_certificates": [],
            "started_at": time.perf_counter(),
            "workflow_status": "planned",
        }

    # ------------------------------------------------------------------
    # spend
    # ------------------------------------------------------------------

    async def spend_inputs(self, state: Dict[str, Any]) -> Dict[str, Any]:
        certificates = list(state.get("spend_certificates", []))
        for account_id, spend in state["spend_ops"][len(certificates):]:
            certificates.append(await self.client.execute_account_op(account_id, spend))
        return {"spend_certificates": certificates, "workflow_status": "spent"}

    # ------------------------------------------------------------------
    # ask authorities for the outputs
    # ------------------------------------------------------------------

    async def request_coins(self, state: Dict[str, Any]) -> Dict[str, Any]:
        if state["coin_kind"] == "transparent":
            return await self._request_transparent(state)
        return await self._request_opaque(state)

    async def _request_opaque(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        cfg, params = client.cfg, client.params
        kept = state["output_secrets"]
        message = CreateAnonymousCoins(tuple(state["spend_certificates"]), state["bundle"])
        shard = cfg.shard_of(state["spend_ops"][0][0])

        async def judge(name: str, reply: WireMessage):
            if isinstance(reply, CoinShares):
                if reply.authority != name or len(reply.shares) != len(kept):
                    return Verdict.REJECT, ErrorReply(ReasonCode.WRONG_SHARE_COUNT, "wrong number of shares", authority=name)
                key = cfg.authority_credential_key(name)
                for share, secret in zip(reply.shares, kept):
                    credential = unblind(params, share, secret.blinding, key)
                    if not plain_verify(params, key, credential, secret.spec.attributes(params)):
                        logger.warning(f"Dropping shares from {name}: they do not verify under its key")
                        return Verdict.REJECT, ErrorReply(
                            ReasonCode.SHARE_VERIFICATION_FAILED, "share does not verify", authority=name
                        )
                return Verdict.ACCEPT, reply.shares
            if isinstance(reply, ErrorReply):
                return Verdict.REJECT, reply
            return _unexpected(name, reply)

        result = await client.driver.broadcast(
            "coin_shares", shard, lambda _: message, judge, need_count=cfg.credential_threshold
        )
        if not result.reached:
            bad = [n for n, r in result.rejected.items() if r.reason == ReasonCode.SHARE_VERIFICATION_FAILED]
            if bad:
                raise WalletError(
                    ReasonCode.SHARE_VERIFICATION_FAILED,
                    f"{len(result.accepted)} valid share sets, need {cfg.credential_threshold}",
                    authority=bad[0],
                )
            result.raise_unless_reached(cfg, "coin creation")
        shares = {cfg.authorities[name].credential_index: value for name, value in result.accepted.items()}
        return {"coin_shares": shares, "workflow_status": "shares_collected"}

    async def _request_transparent(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        cfg = client.cfg
        outputs = state["transparent_outputs"]
        message = CreateTransparentCoins(tuple(state["spend_certificates"]), tuple(outputs))
        shard = cfg.shard_of(state["spend_ops"][0][0])

        async def judge(name: str, reply: WireMessage):
            if isinstance(reply, CoinVotes):
                good = [v for v in reply.votes if v.authority == name and v.verify(cfg.public_key(name))]
                if reply.authority != name or len(good) != len(outputs):
                    return Verdict.REJECT, ErrorReply(ReasonCode.INVALID_VOTE, "coin votes do not verify", authority=name)
                return Verdict.ACCEPT, good
            if isinstance(reply, ErrorReply):
                return Verdict.REJECT, reply
            return _unexpected(name, reply)

        result = await client.driver.broadcast("coin_votes", shard, lambda _: message, judge)
        result.raise_unless_reached(cfg, "transparent coin creation")
        votes = [vote for batch in result.accepted.values() for vote in batch]
        return {"coin_votes": votes, "workflow_status": "shares_collected"}

    # ------------------------------------------------------------------
    # assemble and deliver
    # ------------------------------------------------------------------

    async def assemble(self, state: Dict[str, Any]) -> Dict[str, Any]:
        client = self.client
        wallet = client.wallet
        if state["coin_kind"] == "transparent":
            coins = collect_transparent_coins(client.cfg, state["transparent_outputs"], state["coin_votes"])
            for coin in state.get("inputs", []):
                wallet.remove_transparent_coin(coin)
            for coin in coins:
                if not coin.verify(client.cfg):
                    raise WalletError(ReasonCode.RECIPIENT_REJECTED, f"coin for {coin.account_id} does not verify")
                if coin.account_id in wallet.accounts:
                    wallet.add_transparent_coin(coin)
        else:
            cfg, params = client.cfg, client.params
            try:
                coins = finalize_coins(
                    params,
                    cfg.credential_key(),
                    credential_keys_by_index(cfg),
                    state["coin_shares"],
                    state["output_secrets"],
                    cfg.credential_threshold,
                )
            except CryptoError as e:
                raise WalletError(ReasonCode.SHARE_VERIFICATION_FAILED, e.message)
            for coin in state.get("inputs", []):
                wallet.remove_coin(coin)
            for coin in coins:
                # what each recipient runs before accepting
                if not coin.verify(params, cfg.credential_key()):
                    raise WalletError(ReasonCode.RECIPIENT_REJECTED, f"coin for {coin.account_id} does not verify")
                if coin.account_id in wallet.accounts:
                    wallet.add_coin(coin)
        client.persist()
        logger.info(f"Created {len(coins)} {state['coin_kind']} coins worth {sum(c.value for c in coins)}")
        return {"coins": tuple(coins), "finished_at": time.perf_counter(), "workflow_status": "completed"}
