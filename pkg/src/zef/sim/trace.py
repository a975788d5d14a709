"""What a simulator run leaves behind for the checkers."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set

from ..core.messages import AccountInfoResponse, Certificate, Request, Spend, SpendAndTransfer
from ..core.uid import UID
from ..engine.spendable import CoinRecord, total_spendable
from .client import OpOutcome
from .network import TraceEvent


@dataclass(frozen=True)
class VoteRecord:
    """An authority signed `request_digest` for (account_id, sequence)."""

    authority: str
    account_id: UID
    sequence: int
    request_digest: bytes


def spent_markers(certificates: List[Certificate]) -> Dict[UID, Set[bytes]]:
    """Markers consumed per account by certified Spend / SpendAndTransfer requests."""
    spent: Dict[UID, Set[bytes]] = {}
    for cert in certificates:
        if not isinstance(cert.value, Request):
            continue
        operation = cert.value.operation
        coin = None
        if isinstance(operation, Spend):
            coin = operation.coin
        elif isinstance(operation, SpendAndTransfer):
            coin = operation.coin
        if coin is not None:
            spent.setdefault(cert.value.account_id, set()).add(coin.marker())
    return spent


@dataclass
class Trace:
    """
    Everything observable about one run.

    events: network log; votes: every vote an authority cast; certificates:
    every certificate any client formed; coins: every coin assembled;
    final: AccountInfo answers of the live authorities after dissemination.
    """

    scenario: str
    seed: int
    digest: str
    initial_balances: Dict[UID, int]
    live_authorities: List[str]
    voting_power: Dict[str, int] = field(default_factory=dict)
    quorum_threshold: int = 0
    events: List[TraceEvent] = field(default_factory=list)
    votes: List[VoteRecord] = field(default_factory=list)
    certificates: List[Certificate] = field(default_factory=list)
    coins: List[CoinRecord] = field(default_factory=list)
    outcomes: List[OpOutcome] = field(default_factory=list)
    final: Dict[str, Dict[UID, AccountInfoResponse]] = field(default_factory=dict)
    spendable_samples: List[int] = field(default_factory=list)
    replay_mismatches: int = 0
    completed: bool = True
    steps: int = 0

    @property
    def genesis_total(self) -> int:
        return sum(self.initial_balances.values())

    def total_spendable(self, certificates: Optional[List[Certificate]] = None) -> int:
        certificates = self.certificates if certificates is None else certificates
        return total_spendable(self.initial_balances, certificates, self.coins, spent_markers(certificates))

    def account_ids(self) -> Set[UID]:
        ids: Set[UID] = set(self.initial_balances)
        for answers in self.final.values():
            ids.update(uid for uid, info in answers.items() if info.present)
        return ids

    def summary(self) -> Dict[str, Any]:
        statuses: Dict[str, int] = {}
        for outcome in self.outcomes:
            statuses[outcome.status] = statuses.get(outcome.status, 0) + 1
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "digest": self.digest,
            "steps": self.steps,
            "events": len(self.events),
            "votes": len(self.votes),
            "certificates": len(self.certificates),
            "coins": len(self.coins),
            "outcomes": statuses,
            "live_authorities": self.live_authorities,
            "completed": self.completed,
        }
