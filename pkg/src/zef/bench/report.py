"""
Benchmark reports: one row per load run, raw latency samples alongside.
"""

import logging
from pathlib import Path
from typing import List, Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

Workload = Literal["transfer", "anon-coin"]

REPORT_COLUMNS = [
    "workload",
    "authorities",
    "shards",
    "rate",
    "duration",
    "faults",
    "run",
    "submitted",
    "completed",
    "failed",
    "throughput",
    "latency_p50_ms",
    "latency_p90_ms",
    "latency_p99_ms",
    "latency_mean_ms",
]


class BenchReport(BaseModel):
    """
    Result of one load run.

    Transfer latency runs from submission to the first Ack of the
    confirmation; anon-coin latency runs from submission to assembled coins.
    """

    workload: Workload
    authorities: int
    shards: int
    rate: float = Field(description="offered load, operations per second")
    duration: float
    faults: int = 0
    run: int = 0
    submitted: int = 0
    completed: int = 0
    failed: int = 0
    throughput: float = 0.0
    latency_p50_ms: float = 0.0
    latency_p90_ms: float = 0.0
    latency_p99_ms: float = 0.0
    latency_mean_ms: float = 0.0
    samples_ms: List[float] = Field(default_factory=list, exclude=True)

    @classmethod
    def from_samples(
        cls,
        workload: Workload,
        authorities: int,
        shards: int,
        rate: float,
        duration: float,
        samples_ms: Sequence[float],
        submitted: int,
        failed: int,
        elapsed: float,
        faults: int = 0,
        run: int = 0,
    ) -> "BenchReport":
        report = cls(
            workload=workload,
            authorities=authorities,
            shards=shards,
            rate=rate,
            duration=duration,
            faults=faults,
            run=run,
            submitted=submitted,
            completed=len(samples_ms),
            failed=failed,
            throughput=len(samples_ms) / elapsed if elapsed > 0 else 0.0,
            samples_ms=list(samples_ms),
        )
        if samples_ms:
            data = np.asarray(samples_ms, dtype=float)
            p50, p90, p99 = np.percentile(data, [50, 90, 99])
            report.latency_p50_ms = float(p50)
            report.latency_p90_ms = float(p90)
            report.latency_p99_ms = float(p99)
            report.latency_mean_ms = float(data.mean())
        return report

    def line(self) -> str:
        return (
            f"{self.workload} N={self.authorities} shards={self.shards} faults={self.faults} run={self.run}: "
            f"{self.throughput:.1f} ops/s, p50 {self.latency_p50_ms:.1f} ms, p99 {self.latency_p99_ms:.1f} ms "
            f"({self.completed}/{self.submitted} done, {self.failed} failed)"
        )


def reports_frame(reports: Sequence[BenchReport]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in reports], columns=REPORT_COLUMNS)


def samples_frame(reports: Sequence[BenchReport]) -> pd.DataFrame:
    rows = [
        {"workload": r.workload, "shards": r.shards, "faults": r.faults, "run": r.run, "latency_ms": s}
        for r in reports
        for s in r.samples_ms
    ]
    return pd.DataFrame(rows, columns=["workload", "shards", "faults", "run", "latency_ms"])


def summarize(reports: Sequence[BenchReport]) -> pd.DataFrame:
    """Mean and std of throughput and p50 latency over repeated runs of the same setup."""
    frame = reports_frame(reports)
    keys = ["workload", "authorities", "shards", "rate", "faults"]
    summary = frame.groupby(keys).agg(
        runs=("run", "count"),
        throughput_mean=("throughput", "mean"),
        throughput_std=("throughput", "std"),
        latency_p50_mean_ms=("latency_p50_ms", "mean"),
        latency_p50_std_ms=("latency_p50_ms", "std"),
    )
    return summary.reset_index().fillna(0.0)


def write_reports(reports: Sequence[BenchReport], out_dir: str, stem: str = "load") -> List[Path]:
    """<stem>.csv (one row per run) and <stem>_samples.csv (raw latencies)."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rows = root / f"{stem}.csv"
    samples = root / f"{stem}_samples.csv"
    reports_frame(reports).to_csv(rows, index=False)
    samples_frame(reports).to_csv(samples, index=False)
    logger.info(f"Wrote {len(reports)} report rows to {rows}")
    return [rows, samples]


def load_reports(path: str) -> pd.DataFrame:
    return pd.read_csv(path)
