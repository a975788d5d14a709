"""
Global safety and liveness checks over a Trace.

Each checker reads only the trace (network log, votes, certificates, coins
and AccountInfo answers), never engine internals, and returns a list of
human-readable violations.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

from ..core.messages import AccountInfoResponse, CloseAccount, Request
from ..core.uid import UID
from ..errors import SimulationError
from .trace import Trace, spent_markers

logger = logging.getLogger(__name__)

Checker = Callable[[Trace], List[str]]


def closed_accounts(trace: Trace) -> Set[UID]:
    return {
        cert.value.account_id
        for cert in trace.certificates
        if isinstance(cert.value, Request) and isinstance(cert.value.operation, CloseAccount)
    }


def normalized_view(info: Optional[AccountInfoResponse], closed: bool) -> Tuple:
    """
    The part of an account honest authorities must agree on.

    A closed account may be deleted or recreated ownerless depending on
    whether a late credit landed before or after the close, and its balance
    is unreachable either way, so closed accounts compare as one value.
    """
    if closed:
        return ("closed",)
    if info is None or not info.present:
        return ("absent",)
    return ("present",) + info.summary()


def check_no_double_spend(trace: Trace) -> List[str]:
    consumers: Dict[bytes, Set[bytes]] = defaultdict(set)
    for cert in trace.certificates:
        for markers in spent_markers([cert]).values():
            for marker in markers:
                consumers[marker].add(cert.value.digest())
    violations = [f"coin {marker.hex()} spent by {len(certs)} certificates" for marker, certs in consumers.items() if len(certs) > 1]
    for name, answers in trace.final.items():
        owners: Dict[bytes, UID] = {}
        for uid, info in answers.items():
            for marker in info.spent:
                if marker in owners and owners[marker] != uid:
                    violations.append(f"{name}: coin {marker.hex()} spent in {owners[marker]} and {uid}")
                owners[marker] = uid
    return violations


def check_conservation(trace: Trace) -> List[str]:
    """Total spendable value never exceeds the genesis total."""
    limit = trace.genesis_total
    violations = [
        f"spendable rose to {sample} > genesis {limit} at sample {i}"
        for i, sample in enumerate(trace.spendable_samples)
        if sample > limit
    ]
    total = trace.total_spendable()
    if total > limit:
        violations.append(f"final spendable {total} > genesis {limit}")
    for name, answers in trace.final.items():
        spent = set()
        for info in answers.values():
            spent.update(info.spent)
        unspent = sum(c.value for c in trace.coins if c.marker not in spent)
        balances = sum(info.balance for info in answers.values() if info.present)
        if balances + unspent > limit:
            violations.append(f"{name}: balances {balances} + unspent coins {unspent} > genesis {limit}")
    return violations


def check_unique_certificates(trace: Trace) -> List[str]:
    """Every honest authority votes once per (id, n); at most one value per (id, n) reaches a quorum."""
    violations: List[str] = []
    by_authority: Dict[Tuple[str, UID, int], Set[bytes]] = defaultdict(set)
    by_slot: Dict[Tuple[UID, int], Dict[bytes, Set[str]]] = defaultdict(lambda: defaultdict(set))
    for vote in trace.votes:
        by_authority[(vote.authority, vote.account_id, vote.sequence)].add(vote.request_digest)
        by_slot[(vote.account_id, vote.sequence)][vote.request_digest].add(vote.authority)
    for (name, uid, n), digests in by_authority.items():
        if len(digests) > 1:
            violations.append(f"{name} voted for {len(digests)} requests at {uid}#{n}")

    power, quorum = trace.voting_power, trace.quorum_threshold
    for (uid, n), digests in by_slot.items():
        certifiable = [d for d, signers in digests.items() if sum(power.get(s, 0) for s in signers) >= quorum]
        if len(certifiable) > 1:
            violations.append(f"{len(certifiable)} requests reached a quorum at {uid}#{n}")

    certified: Dict[Tuple[UID, int], Set[bytes]] = defaultdict(set)
    for cert in trace.certificates:
        if isinstance(cert.value, Request):
            certified[(cert.value.account_id, cert.value.sequence)].add(cert.value.digest())
    violations.extend(f"{len(d)} certificates at {uid}#{n}" for (uid, n), d in certified.items() if len(d) > 1)
    return violations


def check_agreement(trace: Trace) -> List[str]:
    closed = closed_accounts(trace)
    violations: List[str] = []
    names = sorted(trace.final)
    if len(names) < 2:
        return violations
    for uid in sorted(trace.account_ids()):
        views = {name: normalized_view(trace.final[name].get(uid), uid in closed) for name in names}
        if len(set(views.values())) > 1:
            detail = ", ".join(f"{name}={view}" for name, view in views.items())
            violations.append(f"authorities disagree on {uid}: {detail}")
    return violations


def check_deactivation(trace: Trace) -> List[str]:
    """A closed account never has an owner again."""
    violations: List[str] = []
    for uid in closed_accounts(trace):
        for name, answers in trace.final.items():
            info = answers.get(uid)
            if info is not None and info.present and info.owner is not None:
                violations.append(f"{name}: closed account {uid} is active again")
    return violations


def check_liveness(trace: Trace) -> List[str]:
    violations = [
        f"op #{o.index} {o.kind} on {o.account} did not complete ({o.reason})"
        for o in trace.outcomes
        if not o.adversarial and o.status == "failed"
    ]
    if not trace.completed:
        violations.append(f"network still busy after {trace.steps} steps")
    return violations


def check_coin_replays(trace: Trace) -> List[str]:
    if trace.replay_mismatches:
        return [f"{trace.replay_mismatches} replayed coin requests produced different coins"]
    return []


SAFETY_CHECKERS: Dict[str, Checker] = {
    "no_double_spend": check_no_double_spend,
    "conservation": check_conservation,
    "unique_certificates": check_unique_certificates,
    "agreement": check_agreement,
    "deactivation": check_deactivation,
    "coin_replays": check_coin_replays,
}

ALL_CHECKERS: Dict[str, Checker] = {**SAFETY_CHECKERS, "liveness": check_liveness}


@dataclass
class Verdict:
    """Checker results for one trace."""

    digest: str
    violations: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def failed_checkers(self) -> List[str]:
        return [name for name, found in self.violations.items() if found]

    def raise_if_failed(self, minimized=None) -> None:
        if self.passed:
            return
        first = self.failed_checkers()[0]
        raise SimulationError(
            f"{first}: {self.violations[first][0]}",
            trace_digest=self.digest,
            minimized=minimized,
        )

    def to_dict(self) -> dict:
        return {"digest": self.digest, "passed": self.passed, "violations": self.violations}


def run_checkers(trace: Trace, checkers: Optional[Dict[str, Checker]] = None) -> Verdict:
    verdict = Verdict(trace.digest)
    for name, checker in (checkers or ALL_CHECKERS).items():
        verdict.violations[name] = checker(trace)
        if verdict.violations[name]:
            logger.warning(f"{trace.scenario}: {name} failed: {verdict.violations[name][0]}")
    return verdict
