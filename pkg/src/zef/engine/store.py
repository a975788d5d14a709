"""
In-memory account store for one authority shard, with optional snapshots.

Snapshot format: magic, then a sequence of (UID, AccountState) records,
then a sequence of (UID, received keys) tombstones. All canonical bytes.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Set, Tuple

from ..core.encoding import Reader, Writer, decode_exact, hash_bytes
from ..core.uid import UID
from ..errors import ProtocolError, ReasonCode
from .state import AccountState

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"ZEFSNAP1"


class AccountStore:
    """
    Keyed map UID -> AccountState plus tombstones for deleted accounts.

    A tombstone remembers the cross-shard keys the account had received
    before it was closed and deleted, so a late duplicate Credit is not
    counted twice if the record is recreated.
    """

    def __init__(self) -> None:
        self._accounts: Dict[UID, AccountState] = {}
        self._retired: Dict[UID, Set[bytes]] = {}

    # ------------------------------------------------------------------
    # access
    # ------------------------------------------------------------------

    def get(self, account_id: UID) -> Optional[AccountState]:
        return self._accounts.get(account_id)

    def put(self, account_id: UID, state: AccountState) -> None:
        self._accounts[account_id] = state

    def __contains__(self, account_id: object) -> bool:
        return account_id in self._accounts

    def __len__(self) -> int:
        return len(self._accounts)

    def ids(self) -> List[UID]:
        return sorted(self._accounts)

    def items(self) -> Iterator[Tuple[UID, AccountState]]:
        for account_id in self.ids():
            yield account_id, self._accounts[account_id]

    # ------------------------------------------------------------------
    # deletion
    # ------------------------------------------------------------------

    def delete(self, account_id: UID) -> None:
        """Drop the record without leaving a tombstone."""
        self._accounts.pop(account_id, None)

    def retire(self, account_id: UID) -> None:
        """Drop the record of a closed account and remember its received keys."""
        state = self._accounts.pop(account_id, None)
        keys = set(self._retired.get(account_id, set()))
        if state is not None:
            keys |= state.received_keys
        self._retired[account_id] = keys

    def is_retired(self, account_id: UID) -> bool:
        return account_id in self._retired

    def retired_keys(self, account_id: UID) -> Set[bytes]:
        return set(self._retired.get(account_id, set()))

    def retired_ids(self) -> List[UID]:
        return sorted(self._retired)

    @property
    def retired_count(self) -> int:
        return len(self._retired)

    # ------------------------------------------------------------------
    # copies, digests, snapshots
    # ------------------------------------------------------------------

    def clone(self) -> "AccountStore":
        other = AccountStore()
        other._accounts = {k: v.copy() for k, v in self._accounts.items()}
        other._retired = {k: set(v) for k, v in self._retired.items()}
        return other

    def state_digest(self) -> bytes:
        """Hash over every account summary, in id order."""
        w = Writer()
        for account_id, state in self.items():
            account_id.encode(w)
            w.raw(state.digest())
        return hash_bytes(b"zef/store", w.getvalue())

    def encode(self, w: Writer) -> None:
        w.raw(SNAPSHOT_MAGIC)

        def write_account(w: Writer, item: Tuple[UID, AccountState]) -> None:
            item[0].encode(w)
            item[1].encode(w)

        def write_tombstone(w: Writer, account_id: UID) -> None:
            account_id.encode(w)
            w.seq(sorted(self._retired[account_id]), lambda w, k: w.blob(k))

        w.seq(list(self.items()), write_account)
        w.seq(sorted(self._retired), write_tombstone)

    @classmethod
    def decode(cls, r: Reader) -> "AccountStore":
        if r.raw(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "not a zef snapshot")
        store = cls()
        for account_id, state in r.seq(lambda r: (UID.decode(r), AccountState.decode(r))):
            store._accounts[account_id] = state
        for account_id, keys in r.seq(lambda r: (UID.decode(r), set(r.seq(lambda r: r.blob())))):
            store._retired[account_id] = keys
        return store

    def save_snapshot(self, path: str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        w = Writer()
        self.encode(w)
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_bytes(w.getvalue())
        tmp.replace(target)
        logger.info(f"Saved snapshot with {len(self)} accounts to {target}")
        return target

    @classmethod
    def load_snapshot(cls, path: str) -> "AccountStore":
        store = decode_exact(Path(path).read_bytes(), cls.decode)
        logger.info(f"Loaded snapshot with {len(store)} accounts from {path}")
        return store
