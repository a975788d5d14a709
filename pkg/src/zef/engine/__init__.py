"""Per-authority account state machine."""

from .engine import AccountEngine, Validation
from .spendable import CoinRecord, compute_spendable, total_spendable
from .state import AccountState, Activate, Credit, CrossShardMessage
from .store import AccountStore

__all__ = [
    "AccountEngine",
    "AccountState",
    "AccountStore",
    "Activate",
    "CoinRecord",
    "Credit",
    "CrossShardMessage",
    "Validation",
    "compute_spendable",
    "total_spendable",
]
