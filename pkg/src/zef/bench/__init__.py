"""Load generation, crypto microbenchmarks and charts."""

from .cluster import LocalCluster, find_free_base_port
from .load import ShardGenerator, bench_genesis, benchmark, run_load, shard_sweep
from .micro import MICROBENCH_STEPS, run_microbench, write_microbench
from .report import BenchReport, load_reports, reports_frame, samples_frame, summarize, write_reports

__all__ = [
    "BenchReport",
    "LocalCluster",
    "MICROBENCH_STEPS",
    "ShardGenerator",
    "bench_genesis",
    "benchmark",
    "find_free_base_port",
    "load_reports",
    "reports_frame",
    "run_load",
    "run_microbench",
    "samples_frame",
    "shard_sweep",
    "summarize",
    "write_microbench",
    "write_reports",
]
