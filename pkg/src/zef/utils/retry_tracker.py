"""
Track whether retrying authorities actually helps.

When a wallet broadcast has to retry an authority (timeout, lagging
sequence number, missing history), did the retry end in a vote or was it
wasted? This module keeps per-broadcast attempt logs so the quorum driver
and the benchmarks can report it.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from statistics import mean
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class RetryAttempt:
    """One message sent to one authority."""

    authority: str
    attempt_number: int
    outcome: str = "pending"  # accepted / rejected / timeout / unreachable / retry
    reason: Optional[str] = None
    latency_ms: float = 0.0
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "authority": self.authority,
            "attempt_number": self.attempt_number,
            "outcome": self.outcome,
            "reason": self.reason,
            "latency_ms": round(self.latency_ms, 3),
            "timestamp": self.timestamp,
        }


@dataclass
class BroadcastReport:
    """Summary of one quorum broadcast."""

    broadcast_id: str
    kind: str
    total_attempts: int
    accepted: List[str]
    failed: Dict[str, str]
    retried_authorities: int
    retries_that_helped: int
    attempts: List[RetryAttempt] = field(default_factory=list)

    @property
    def retry_was_worthwhile(self) -> bool:
        return self.retries_that_helped > 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "broadcast_id": self.broadcast_id,
            "kind": self.kind,
            "total_attempts": self.total_attempts,
            "accepted": self.accepted,
            "failed": self.failed,
            "retried_authorities": self.retried_authorities,
            "retries_that_helped": self.retries_that_helped,
            "attempts": [a.to_dict() for a in self.attempts],
        }


class RetryTracker:
    """
    Keeps attempt logs per broadcast, plus finished reports for later stats.

    The idea: if retries to some authority never turn into votes, it is
    probably crashed and the backoff could give up earlier.
    """

    MAX_HISTORY = 1000

    def __init__(self):
        self._sessions: Dict[str, List[RetryAttempt]] = {}
        self._kinds: Dict[str, str] = {}
        self._historical_reports: List[BroadcastReport] = []

    def start(self, broadcast_id: str, kind: str) -> None:
        self._sessions[broadcast_id] = []
        self._kinds[broadcast_id] = kind

    def record(
        self,
        broadcast_id: str,
        authority: str,
        outcome: str,
        reason: Optional[str] = None,
        latency_ms: float = 0.0,
    ) -> RetryAttempt:
        attempts = self._sessions.setdefault(broadcast_id, [])
        number = 1 + sum(1 for a in attempts if a.authority == authority)
        attempt = RetryAttempt(authority, number, outcome, reason, latency_ms)
        attempts.append(attempt)
        if number > 1:
            logger.debug(f"[{broadcast_id}] attempt {number} to {authority}: {outcome} {reason or ''}")
        return attempt

    def finish(self, broadcast_id: str) -> BroadcastReport:
        attempts = self._sessions.pop(broadcast_id, [])
        kind = self._kinds.pop(broadcast_id, "unknown")

        by_authority: Dict[str, List[RetryAttempt]] = {}
        for attempt in attempts:
            by_authority.setdefault(attempt.authority, []).append(attempt)

        accepted = sorted(a for a, log in by_authority.items() if log[-1].outcome == "accepted")
        failed = {
            a: (log[-1].reason or log[-1].outcome)
            for a, log in by_authority.items()
            if log[-1].outcome != "accepted"
        }
        retried = [log for log in by_authority.values() if len(log) > 1]
        helped = sum(1 for log in retried if log[-1].outcome == "accepted")

        report = BroadcastReport(
            broadcast_id=broadcast_id,
            kind=kind,
            total_attempts=len(attempts),
            accepted=accepted,
            failed=failed,
            retried_authorities=len(retried),
            retries_that_helped=helped,
            attempts=attempts,
        )
        self._historical_reports.append(report)
        del self._historical_reports[:-self.MAX_HISTORY]
        return report

    def get_historical_stats(self) -> Dict[str, Any]:
        """Aggregate stats over finished broadcasts."""
        reports = self._historical_reports
        if not reports:
            return {"message": "No historical data available"}
        retried = [r for r in reports if r.retried_authorities]
        return {
            "total_broadcasts": len(reports),
            "avg_attempts_per_broadcast": mean(r.total_attempts for r in reports),
            "broadcasts_with_retries": len(retried),
            "retries_that_helped": sum(r.retries_that_helped for r in reports),
            "worthwhile_rate": (
                sum(1 for r in retried if r.retry_was_worthwhile) / len(retried) if retried else 0.0
            ),
        }

    def clear(self) -> None:
        self._sessions.clear()
        self._kinds.clear()
        self._historical_reports.clear()


# shared instance
_tracker_instance: Optional[RetryTracker] = None


def get_retry_tracker() -> RetryTracker:
    """Grab the shared tracker."""
    global _tracker_instance
    if _tracker_instance is None:
        _tracker_instance = RetryTracker()
    return _tracker_instance
