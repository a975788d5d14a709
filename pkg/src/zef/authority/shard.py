"""
One authority shard: decodes wire messages, runs the engine or the coin
handlers, and answers with exactly one wire message.

Nothing here blocks on another shard. Cross-shard effects are handed to the
router and the confirmation is acknowledged right away.
"""

import logging
import time
from typing import Callable, List, Optional

from ..coins.opaque import CreateAnonymousCoins
from ..coins.params import PublicParams
from ..coins.transparent import CreateTransparentCoins
from ..core.committee import CommitteeConfig
from ..core.messages import AccountInfoQuery, AuthenticatedRequest, Certificate
from ..engine.engine import AccountEngine
from ..engine.state import CrossShardMessage
from ..engine.store import AccountStore
from ..errors import EngineError, ProtocolError, ReasonCode, ZefError
from .coin_handler import handle_anonymous_coin_creation, handle_transparent_creation
from .keyfile import AuthoritySecrets
from .metrics import ShardMetrics
from .wire import Ack, ErrorReply, WireMessage, decode_body, encode_body, tag_of

logger = logging.getLogger(__name__)

Route = Callable[[CrossShardMessage], None]


class ShardService:
    """
    Request handling for one (authority, shard) pair.

    Args:
        cfg: committee configuration
        secrets: this authority's key file
        shard: shard index served
        store: restored store (fresh genesis state when omitted)
        params: public coin parameters (derived from cfg when omitted)
        route: called with every emitted cross-shard message
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        secrets: AuthoritySecrets,
        shard: int,
        store: Optional[AccountStore] = None,
        params: Optional[PublicParams] = None,
        route: Optional[Route] = None,
    ):
        self.cfg = cfg
        self.name = secrets.name
        self.shard = shard
        self.key = secrets.signing_key()
        self.credential_secret = secrets.credential_secret()
        self.engine = AccountEngine(cfg, self.name, self.key, shard=shard, store=store, params=params)
        self.metrics = ShardMetrics()
        self.route: Optional[Route] = route
        self.outbox: List[CrossShardMessage] = []

    @property
    def label(self) -> str:
        return f"{self.name}/{self.shard}"

    # ------------------------------------------------------------------
    # entry points
    # ------------------------------------------------------------------

    def handle_body(self, body: bytes) -> bytes:
        """Raw tag+payload in, raw tag+payload out. Never raises."""
        try:
            message = decode_body(body)
        except ZefError as e:
            logger.warning(f"{self.label}: undecodable frame: {e}")
            self.metrics.observe("undecodable", 0.0, e.reason.value)
            return encode_body(ErrorReply.from_error(e, self.name))
        return encode_body(self.handle(message))

    def handle(self, message: WireMessage) -> WireMessage:
        """Dispatch one decoded message. Errors come back as ErrorReply."""
        start = time.perf_counter()
        kind = tag_of(message).name.lower()
        error: Optional[str] = None
        try:
            reply = self._dispatch(message)
        except ZefError as e:
            error = e.reason.value
            logger.warning(f"{self.label}: rejected {kind}: {e}")
            reply = ErrorReply.from_error(e, self.name)
        except Exception as e:
            error = ReasonCode.INVALID_OPERATION.value
            logger.exception(f"{self.label}: unexpected failure handling {kind}")
            reply = ErrorReply(ReasonCode.INVALID_OPERATION, f"internal error: {e}", authority=self.name)
        self.metrics.observe(kind, time.perf_counter() - start, error)
        return reply

    def _dispatch(self, message: WireMessage) -> WireMessage:
        if isinstance(message, AuthenticatedRequest):
            return self.engine.handle_request(message)
        if isinstance(message, Certificate):
            return self._confirm(message)
        if isinstance(message, CrossShardMessage):
            self.engine.handle_cross_shard(message)
            return self._ack(message.target)
        if isinstance(message, AccountInfoQuery):
            return self.engine.account_info(message)
        if isinstance(message, CreateAnonymousCoins):
            return handle_anonymous_coin_creation(
                self.cfg, self.engine.params, self.credential_secret, self.name, message
            )
        if isinstance(message, CreateTransparentCoins):
            return handle_transparent_creation(self.cfg, self.key, self.name, message)
        raise ProtocolError(ReasonCode.UNKNOWN_TAG, f"authorities do not accept {tag_of(message).name}")

    def _confirm(self, cert: Certificate) -> Ack:
        messages = self.engine.handle_confirmation(cert)
        for msg in messages:
            self.forward(msg)
        request = cert.request
        return self._ack(request.account_id, fallback_sequence=request.sequence + 1)

    def _ack(self, account_id, fallback_sequence: int = 0) -> Ack:
        state = self.engine.store.get(account_id)
        if state is None:
            return Ack(account_id, fallback_sequence, 0)
        return Ack(account_id, state.next_sequence, state.balance)

    # ------------------------------------------------------------------
    # cross-shard
    # ------------------------------------------------------------------

    def forward(self, msg: CrossShardMessage) -> None:
        """Hand an effect to the router, or keep it in the outbox when there is none."""
        if self.route is not None:
            self.route(msg)
        elif self.engine.owns(msg.target):
            try:
                self.engine.handle_cross_shard(msg)
            except EngineError as e:
                logger.error(f"{self.label}: refused {type(msg.effect).__name__} to {msg.target}: {e.message}")
        else:
            self.outbox.append(msg)

    def get_stats(self) -> dict:
        return {
            "authority": self.name,
            "shard": self.shard,
            "engine": self.engine.get_stats(),
            "outbox": len(self.outbox),
            **self.metrics.get_stats(),
        }
