"""
The wallet file: owned accounts, their keys and certificate history, coins,
and per-authority sync cursors.

Stored in the same canonical encoding as everything on the wire, behind a
short magic header. One process writes a wallet file at a time.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set

from ..coins.opaque import OpaqueCoin
from ..coins.transparent import TransparentCoin
from ..core.encoding import Reader, Writer, decode_exact
from ..core.keys import KeyPair, PublicKey
from ..core.messages import AuthenticatedRequest, Certificate, ChangeKey, CloseAccount, Operation, Request
from ..core.uid import UID
from ..errors import ProtocolError, ReasonCode, WalletError

logger = logging.getLogger(__name__)

WALLET_MAGIC = b"ZEFWLT01"


@dataclass
class OwnedAccount:
    """
    One account this wallet controls.

    Attributes:
        key: current owner key
        next_sequence: sequence number the next request will use
        certificates: every certificate executed on this account, in order
        pending: signed request for next_sequence not yet certified
        staged_key: key a pending ChangeKey rotates to
        opening: the OpenAccount certificate that created the account, if any
    """

    key: KeyPair
    next_sequence: int = 0
    certificates: List[Certificate] = field(default_factory=list)
    pending: Optional[AuthenticatedRequest] = None
    staged_key: Optional[KeyPair] = None
    opening: Optional[Certificate] = None

    def encode(self, w: Writer) -> None:
        w.raw(self.key.seed())
        w.u64(self.next_sequence)
        w.seq(self.certificates, lambda w, c: c.encode(w))
        w.optional(self.pending, lambda w, p: p.encode(w))
        w.optional(self.staged_key, lambda w, k: w.raw(k.seed()))
        w.optional(self.opening, lambda w, c: c.encode(w))

    @classmethod
    def decode(cls, r: Reader) -> "OwnedAccount":
        key = KeyPair.from_seed(r.raw(32))
        next_sequence = r.u64()
        certificates = r.seq(Certificate.decode)
        pending = r.optional(AuthenticatedRequest.decode)
        staged = r.optional(lambda r: KeyPair.from_seed(r.raw(32)))
        opening = r.optional(Certificate.decode)
        return cls(key, next_sequence, certificates, pending, staged, opening)


class WalletState:
    """
    Everything a client keeps between runs.

    The equivocation guard lives here: `sign_request` refuses to sign a
    second, different request for an (account, sequence) pair that already
    has a signed one.
    """

    def __init__(self):
        self.accounts: Dict[UID, OwnedAccount] = {}
        self.coins: List[OpaqueCoin] = []
        self.transparent_coins: List[TransparentCoin] = []
        self.received: List[Certificate] = []
        self.seen_owner_keys: Set[bytes] = set()
        self.cursors: Dict[str, Dict[UID, int]] = {}
        self.spare_keys: List[KeyPair] = []
        self.path: Optional[Path] = None

    # ------------------------------------------------------------------
    # accounts
    # ------------------------------------------------------------------

    def add_account(
        self,
        account_id: UID,
        key: KeyPair,
        next_sequence: int = 0,
        opening: Optional[Certificate] = None,
    ) -> OwnedAccount:
        account = OwnedAccount(key, next_sequence, opening=opening)
        self.accounts[account_id] = account
        self.seen_owner_keys.add(key.public.data)
        return account

    def account(self, account_id: UID) -> OwnedAccount:
        account = self.accounts.get(account_id)
        if account is None:
            raise WalletError(ReasonCode.OWNER_KEY_MISMATCH, f"wallet does not own {account_id}")
        return account

    def sign_request(self, account_id: UID, operation: Operation) -> AuthenticatedRequest:
        """
        Sign Execute(id, n, O) at the account's next sequence number.

        Raises:
            WalletError(EquivocationRefused): a different request is already
                signed for this sequence number
        """
        account = self.account(account_id)
        if account.pending is not None:
            if account.pending.request.operation == operation:
                return account.pending
            raise WalletError(
                ReasonCode.EQUIVOCATION_REFUSED,
                f"{account_id} already has a signed request at sequence {account.next_sequence}",
                expected_sequence=account.next_sequence,
            )
        request = Request(account_id, account.next_sequence, operation)
        account.pending = request.signed_by(account.key)
        return account.pending

    def discard_pending(self, account_id: UID) -> None:
        """Forget a signed request that collected no vote at all."""
        account = self.account(account_id)
        if account.pending is not None:
            logger.info(f"Discarding unvoted request for {account_id} at {account.next_sequence}")
        account.pending = None
        account.staged_key = None

    def record_certificate(self, cert: Certificate) -> None:
        """Apply one of our own certificates: bump the sequence, rotate keys, clear pending."""
        request = cert.request
        account = self.accounts.get(request.account_id)
        if account is None:
            return
        if request.sequence < account.next_sequence:
            return
        if request.sequence > account.next_sequence:
            raise WalletError(
                ReasonCode.HISTORY_UNAVAILABLE,
                f"certificate for {request.account_id} at {request.sequence}, wallet is at {account.next_sequence}",
            )
        account.certificates.append(cert)
        account.next_sequence += 1
        account.pending = None
        operation = request.operation
        if isinstance(operation, CloseAccount):
            del self.accounts[request.account_id]
            return
        if isinstance(operation, ChangeKey):
            if account.staged_key is not None and account.staged_key.public == operation.new_owner:
                account.key = account.staged_key
                self.seen_owner_keys.add(operation.new_owner.data)
            else:
                # rotated to a key we do not hold
                del self.accounts[request.account_id]
                return
        account.staged_key = None

    def record_received(self, cert: Certificate) -> None:
        digest = cert.digest()
        if any(c.digest() == digest for c in self.received):
            return
        self.received.append(cert)

    def remove_account(self, account_id: UID) -> None:
        self.accounts.pop(account_id, None)

    # ------------------------------------------------------------------
    # coins
    # ------------------------------------------------------------------

    def add_coin(self, coin: OpaqueCoin) -> None:
        if any(c.account_id == coin.account_id and c.index == coin.index for c in self.coins):
            return
        self.coins.append(coin)

    def remove_coin(self, coin: OpaqueCoin) -> None:
        self.coins = [c for c in self.coins if (c.account_id, c.index) != (coin.account_id, coin.index)]

    def add_transparent_coin(self, coin: TransparentCoin) -> None:
        if any(c.seed == coin.seed for c in self.transparent_coins):
            return
        self.transparent_coins.append(coin)

    def remove_transparent_coin(self, coin: TransparentCoin) -> None:
        self.transparent_coins = [c for c in self.transparent_coins if c.seed != coin.seed]

    def key_seen(self, key: PublicKey) -> bool:
        return key.data in self.seen_owner_keys

    def new_spare_key(self) -> KeyPair:
        """A fresh key to hand to a broker; kept until an account opened for it is accepted."""
        key = KeyPair.generate()
        self.spare_keys.append(key)
        return key

    def take_spare_key(self, public: PublicKey) -> Optional[KeyPair]:
        for key in self.spare_keys:
            if key.public == public:
                self.spare_keys.remove(key)
                return key
        return None

    # ------------------------------------------------------------------
    # sync cursors
    # ------------------------------------------------------------------

    def cursor(self, authority: str, account_id: UID) -> int:
        return self.cursors.get(authority, {}).get(account_id, 0)

    def advance_cursor(self, authority: str, account_id: UID, next_sequence: int) -> None:
        known = self.cursors.setdefault(authority, {})
        known[account_id] = max(known.get(account_id, 0), next_sequence)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def encode(self, w: Writer) -> None:
        def write_account(w: Writer, item) -> None:
            item[0].encode(w)
            item[1].encode(w)

        def write_position(w: Writer, pair) -> None:
            pair[0].encode(w)
            w.u64(pair[1])

        def write_cursor(w: Writer, item) -> None:
            w.text(item[0])
            w.seq(sorted(item[1].items()), write_position)

        w.seq(sorted(self.accounts.items()), write_account)
        w.seq(self.coins, lambda w, c: c.encode(w))
        w.seq(self.transparent_coins, lambda w, c: c.encode(w))
        w.seq(self.received, lambda w, c: c.encode(w))
        w.seq(sorted(self.seen_owner_keys), lambda w, k: w.raw(k))
        w.seq(sorted(self.cursors.items()), write_cursor)
        w.seq(self.spare_keys, lambda w, k: w.raw(k.seed()))

    @classmethod
    def decode(cls, r: Reader) -> "WalletState":
        wallet = cls()
        for account_id, account in r.seq(lambda r: (UID.decode(r), OwnedAccount.decode(r))):
            wallet.accounts[account_id] = account
        wallet.coins = r.seq(OpaqueCoin.decode)
        wallet.transparent_coins = r.seq(TransparentCoin.decode)
        wallet.received = r.seq(Certificate.decode)
        wallet.seen_owner_keys = set(r.seq(lambda r: r.raw(32)))
        for name, entries in r.seq(lambda r: (r.text(), r.seq(lambda r: (UID.decode(r), r.u64())))):
            wallet.cursors[name] = dict(entries)
        wallet.spare_keys = r.seq(lambda r: KeyPair.from_seed(r.raw(32)))
        return wallet

    def to_bytes(self) -> bytes:
        w = Writer()
        w.raw(WALLET_MAGIC)
        self.encode(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "WalletState":
        if not data.startswith(WALLET_MAGIC):
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "not a wallet file")
        return decode_exact(data[len(WALLET_MAGIC):], cls.decode)

    def save(self, path: Optional[str] = None) -> Path:
        target = Path(path) if path else self.path
        if target is None:
            raise ValueError("wallet has no file path")
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(target)
        self.path = target
        return target

    @classmethod
    def load(cls, path: str) -> "WalletState":
        wallet = cls.from_bytes(Path(path).read_bytes())
        wallet.path = Path(path)
        logger.info(f"Loaded wallet {path}: {len(wallet.accounts)} accounts, {len(wallet.coins)} coins")
        return wallet

    @classmethod
    def load_or_create(cls, path: str) -> "WalletState":
        if Path(path).exists():
            return cls.load(path)
        wallet = cls()
        wallet.path = Path(path)
        return wallet
