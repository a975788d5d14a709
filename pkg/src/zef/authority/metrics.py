"""Per-shard request counters and latency histogram."""

import time
from collections import Counter, deque
from typing import Any, Deque, Dict, Optional

import numpy as np

LATENCY_BUCKETS_MS = (0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 5000)


class ShardMetrics:
    """Counts by message kind and reason code; latency in fixed buckets plus a sample window."""

    def __init__(self, window: int = 10000):
        self.started = time.time()
        self.handled: Counter = Counter()
        self.errors: Counter = Counter()
        self.buckets = [0] * (len(LATENCY_BUCKETS_MS) + 1)
        self._samples: Deque[float] = deque(maxlen=window)

    def observe(self, kind: str, seconds: float, error: Optional[str] = None) -> None:
        self.handled[kind] += 1
        if error:
            self.errors[error] += 1
        ms = seconds * 1000.0
        self._samples.append(ms)
        for i, bound in enumerate(LATENCY_BUCKETS_MS):
            if ms <= bound:
                self.buckets[i] += 1
                break
        else:
            self.buckets[-1] += 1

    def percentiles(self) -> Dict[str, float]:
        if not self._samples:
            return {"p50": 0.0, "p90": 0.0, "p99": 0.0}
        p50, p90, p99 = np.percentile(np.fromiter(self._samples, dtype=float), [50, 90, 99])
        return {"p50": round(float(p50), 3), "p90": round(float(p90), 3), "p99": round(float(p99), 3)}

    def get_stats(self) -> Dict[str, Any]:
        labels = [f"le_{b}" for b in LATENCY_BUCKETS_MS] + ["inf"]
        return {
            "uptime_seconds": round(time.time() - self.started, 1),
            "handled": dict(self.handled),
            "errors": dict(self.errors),
            "latency_ms": self.percentiles(),
            "latency_histogram": dict(zip(labels, self.buckets)),
        }
