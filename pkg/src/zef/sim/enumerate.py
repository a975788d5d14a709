"""
Exhaustive delivery-order exploration for tiny scenarios.

The script is certified up front (every honest authority would vote for
it), then one authority's shards are driven through every order in which
the confirmations and the cross-shard messages they trigger can arrive.
Since an honest authority's state is a function of what it was delivered
and in which order, agreement across authorities reduces to: every
complete order ends in the same normalized state.

A confirmation that the engine answers with "missing history" or "inactive
account" is not enabled yet; it stays in the pool the way a client would
keep retrying it.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple, Union

from ..authority.keyfile import AuthoritySecrets
from ..core.certificates import aggregate_certificate
from ..core.committee import CommitteeConfig, GenesisAccount
from ..core.messages import (
    AccountInfoQuery,
    Certificate,
    ChangeKey,
    CloseAccount,
    OpenAccount,
    Operation,
    Request,
    Transfer,
    Vote,
)
from ..core.uid import UID
from ..engine.engine import AccountEngine
from ..engine.state import CrossShardMessage
from ..engine.store import AccountStore
from ..errors import EngineError, ReasonCode, SimulationError
from .checkers import normalized_view
from .runner import deal_committee
from .scenario import Scenario, key_from_seed

logger = logging.getLogger(__name__)

MAX_ACCOUNTS = 3
MAX_OPS_PER_ACCOUNT = 4
MAX_AUTHORITIES = 4
NOT_YET = {
    ReasonCode.MISSING_EARLIER_CERTIFICATES,
    ReasonCode.INACTIVE_ACCOUNT,
    ReasonCode.BALANCE_OVERFLOW,
}

Event = Union[Certificate, CrossShardMessage]
View = Tuple[Tuple[Tuple[int, ...], tuple], ...]


def event_key(event: Event) -> Tuple:
    if isinstance(event, Certificate):
        return ("confirm", event.value.digest())
    return ("cross", event.origin_digest, event.target.path)


@dataclass
class EnumerationResult:
    """What the exploration found."""

    scenario: str
    leaves: int = 0
    states: int = 0
    outcomes: Dict[View, int] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and len(self.outcomes) == 1

    def final_view(self) -> Dict[UID, tuple]:
        """The single converged state (only meaningful when passed)."""
        view = next(iter(self.outcomes))
        return {UID(path): summary for path, summary in view}

    def raise_if_failed(self) -> None:
        if self.passed:
            return
        reason = self.violations[0] if self.violations else f"{len(self.outcomes)} distinct final states"
        raise SimulationError(f"{self.scenario}: {reason}")


def _check_bounds(scenario: Scenario) -> None:
    per_account: Dict[str, int] = {}
    for op in scenario.script:
        per_account[op.account] = per_account.get(op.account, 0) + 1
        if op.kind not in ("transfer", "open_account", "change_key", "close_account"):
            raise SimulationError(f"{op.kind} is not supported by the enumerator")
    accounts = set(per_account) | {g.account for g in scenario.genesis}
    if (
        len(accounts) > MAX_ACCOUNTS
        or any(n > MAX_OPS_PER_ACCOUNT for n in per_account.values())
        or scenario.authorities > MAX_AUTHORITIES
    ):
        raise SimulationError(
            f"{scenario.name} exceeds {MAX_ACCOUNTS} accounts, {MAX_OPS_PER_ACCOUNT} ops per account "
            f"or {MAX_AUTHORITIES} authorities"
        )


def certify_script(
    cfg: CommitteeConfig, secrets: Dict[str, AuthoritySecrets], scenario: Scenario
) -> List[Certificate]:
    """Sign every script op with a quorum, numbering each account's ops in order."""
    sequence: Dict[UID, int] = {}
    certificates: List[Certificate] = []
    signers: List[str] = []
    for name in cfg.names:
        signers.append(name)
        if cfg.is_quorum(signers):
            break
    for op in scenario.script:
        account_id = op.uid
        operation: Operation
        if op.kind == "transfer":
            operation = Transfer(UID.parse(op.recipient), op.amount)
        elif op.kind == "open_account":
            operation = OpenAccount(UID.parse(op.new_id), key_from_seed(op.key_seed).public)
        elif op.kind == "change_key":
            operation = ChangeKey(key_from_seed(op.key_seed).public)
        else:
            operation = CloseAccount()
        request = Request(account_id, sequence.get(account_id, 0), operation)
        sequence[account_id] = request.sequence + 1
        votes = [(name, Vote.create(request, name, secrets[name].signing_key()).signature) for name in signers]
        certificates.append(aggregate_certificate(cfg, request, votes))
    return certificates


class ScheduleExplorer:
    """
    Depth-first search over delivery orders with memoized states.

    Args:
        cfg: committee (genesis included)
        secrets: key files, the explored authority's is used for its engines
        certificates: confirmations to deliver
        authority: name of the authority whose shards are explored
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        secrets: Dict[str, AuthoritySecrets],
        certificates: List[Certificate],
        authority: Optional[str] = None,
    ):
        self.cfg = cfg
        self.name = authority or cfg.names[0]
        self.key = secrets[self.name].signing_key()
        self.certificates = certificates
        self.closed: Set[UID] = {
            c.request.account_id for c in certificates if isinstance(c.request.operation, CloseAccount)
        }
        self.ids = self._interesting_ids()
        self._seen: Set[Tuple] = set()

    def _interesting_ids(self) -> List[UID]:
        ids: Set[UID] = {UID(tuple(g.account_id)) for g in self.cfg.genesis}
        for cert in self.certificates:
            request = cert.request
            ids.add(request.account_id)
            if isinstance(request.operation, Transfer):
                ids.add(request.operation.recipient)
            elif isinstance(request.operation, OpenAccount):
                ids.add(request.operation.new_id)
        return sorted(ids, key=lambda uid: (len(uid.path), uid.path))

    def _fresh_engines(self) -> Dict[int, AccountEngine]:
        return {
            shard: AccountEngine(self.cfg, self.name, self.key, shard=shard)
            for shard in range(self.cfg.num_shards)
        }

    def _clone(self, engines: Dict[int, AccountEngine]) -> Dict[int, AccountEngine]:
        return {
            shard: AccountEngine(self.cfg, self.name, self.key, shard=shard, store=engine.store.clone())
            for shard, engine in engines.items()
        }

    @staticmethod
    def _store_key(store: AccountStore) -> Tuple:
        retired = tuple((uid.path, tuple(sorted(store.retired_keys(uid)))) for uid in store.retired_ids())
        return store.state_digest(), retired

    def _memo_key(self, engines: Dict[int, AccountEngine], pool: Dict[Tuple, Event]) -> Tuple:
        stores = tuple(self._store_key(engines[s].store) for s in sorted(engines))
        return stores, frozenset(pool)

    def _deliver(self, engines: Dict[int, AccountEngine], event: Event) -> Optional[List[CrossShardMessage]]:
        """Apply one event. None when it is not enabled in this state."""
        if isinstance(event, Certificate):
            engine = engines[self.cfg.shard_of(event.request.account_id)]
            try:
                return engine.handle_confirmation(event)
            except EngineError as e:
                if e.reason in NOT_YET:
                    return None
                raise
        engines[self.cfg.shard_of(event.target)].handle_cross_shard(event)
        return []

    def view(self, engines: Dict[int, AccountEngine]) -> View:
        rows = []
        for uid in self.ids:
            info = engines[self.cfg.shard_of(uid)].account_info(AccountInfoQuery(uid))
            rows.append((uid.path, normalized_view(info, uid in self.closed)))
        return tuple(rows)

    def _check_leaf(self, engines: Dict[int, AccountEngine], pool: Dict[Tuple, Event], result: EnumerationResult) -> None:
        result.leaves += 1
        if pool:
            stuck = ", ".join(str(key[0]) for key in pool)
            result.violations.append(f"schedule stalled with undeliverable events: {stuck}")
            return
        for uid in self.closed:
            info = engines[self.cfg.shard_of(uid)].account_info(AccountInfoQuery(uid))
            if info.present and info.owner is not None:
                result.violations.append(f"closed account {uid} has an owner again")
        view = self.view(engines)
        result.outcomes[view] = result.outcomes.get(view, 0) + 1

    def _explore(self, engines: Dict[int, AccountEngine], pool: Dict[Tuple, Event], result: EnumerationResult) -> None:
        memo = self._memo_key(engines, pool)
        if memo in self._seen:
            return
        self._seen.add(memo)
        result.states += 1

        progressed = False
        for key in sorted(pool):
            branch = self._clone(engines)
            emitted = self._deliver(branch, pool[key])
            if emitted is None:
                continue
            progressed = True
            rest = {k: v for k, v in pool.items() if k != key}
            for msg in emitted:
                rest[event_key(msg)] = msg
            self._explore(branch, rest, result)
        if not progressed:
            self._check_leaf(engines, pool, result)

    def run(self, name: str = "schedules") -> EnumerationResult:
        result = EnumerationResult(name)
        self._seen.clear()
        pool: Dict[Tuple, Event] = {event_key(c): c for c in self.certificates}
        self._explore(self._fresh_engines(), pool, result)
        logger.info(
            f"{name}: {result.states} states, {result.leaves} leaves, {len(result.outcomes)} distinct outcomes"
        )
        return result


def enumerate_small_schedules(
    scenario: Scenario,
    committee: Optional[Tuple[CommitteeConfig, Dict[str, AuthoritySecrets]]] = None,
) -> EnumerationResult:
    """
    Explore every delivery order of a tiny honest scenario.

    Raises:
        SimulationError: when the scenario is too large to enumerate
    """
    _check_bounds(scenario)
    base_cfg, secrets = committee or deal_committee(scenario.authorities, scenario.shards, scenario.range_bits)
    keys = scenario.genesis_keys()
    cfg = base_cfg.model_copy(
        update={
            "genesis": [
                GenesisAccount(account_id=list(g.uid.path), owner=keys[g.uid].public.hex(), balance=g.balance)
                for g in scenario.genesis
            ]
        }
    )
    certificates = certify_script(cfg, secrets, scenario)
    return ScheduleExplorer(cfg, secrets, certificates).run(scenario.name)
