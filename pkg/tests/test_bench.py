"""
Tests for load generation, benchmark reports and charts.
"""

import pytest

from src.zef.bench.cluster import LocalCluster
from src.zef.bench.load import bench_genesis, benchmark
from src.zef.bench.micro import run_microbench, write_microbench
from src.zef.bench.plot import plot_latency_cdf, plot_load
from src.zef.bench.report import BenchReport, load_reports, summarize, write_reports
from src.zef.core.committee import shard_for


def _report(run: int, throughput: float, shards: int = 1, samples=(10.0, 20.0, 30.0)) -> BenchReport:
    report = BenchReport.from_samples(
        "transfer", 4, shards, 50.0, 1.0, list(samples), submitted=len(samples), failed=0, elapsed=1.0, run=run
    )
    report.throughput = throughput
    return report


class TestGenesis:
    """Tests for bench account layout."""

    def test_accounts_per_shard(self):
        """Should give every shard the same number of accounts."""
        genesis = bench_genesis(2, 3, balance=100)
        assert len(genesis) == 6
        shards = [shard_for(uid, 2) for uid, _, _ in genesis]
        assert shards.count(0) == 3
        assert shards.count(1) == 3
        assert all(balance == 100 for _, _, balance in genesis)

    def test_reproducible_keys(self):
        """Should derive the same keys from the same seed."""
        first = bench_genesis(1, 2, balance=1, seed=4)
        second = bench_genesis(1, 2, balance=1, seed=4)
        assert [k.public for _, k, _ in first] == [k.public for _, k, _ in second]


class TestReports:
    """Tests for BenchReport and the CSV helpers."""

    def test_percentiles(self):
        """Should compute latency percentiles from the samples."""
        report = BenchReport.from_samples(
            "transfer", 4, 1, 100.0, 1.0, [float(i) for i in range(1, 101)], submitted=100, failed=0, elapsed=2.0
        )
        assert report.completed == 100
        assert report.throughput == 50.0
        assert report.latency_p50_ms == pytest.approx(50.5)
        assert report.latency_mean_ms == pytest.approx(50.5)
        assert "50.0 ops/s" in report.line()

    def test_no_samples(self):
        """Should report zeros when nothing completed."""
        report = BenchReport.from_samples("anon-coin", 4, 1, 1.0, 1.0, [], submitted=3, failed=3, elapsed=1.0)
        assert report.completed == 0
        assert report.latency_p99_ms == 0.0
        assert report.throughput == 0.0

    def test_summarize(self):
        """Should average repeated runs of one setup."""
        summary = summarize([_report(0, 10.0), _report(1, 20.0)])
        assert len(summary) == 1
        row = summary.iloc[0]
        assert row["runs"] == 2
        assert row["throughput_mean"] == pytest.approx(15.0)

    def test_write_and_load(self, tmp_path):
        """Should write one row per run plus the raw samples."""
        rows, samples = write_reports([_report(0, 10.0), _report(1, 12.0)], str(tmp_path))
        frame = load_reports(str(rows))
        assert list(frame["run"]) == [0, 1]
        assert len(load_reports(str(samples))) == 6


class TestPlots:
    """Tests for the chart writers."""

    def test_plot_single_setup(self, tmp_path):
        """Should fall back to one chart when nothing varies."""
        rows, _ = write_reports([_report(0, 10.0), _report(1, 12.0)], str(tmp_path))
        written = plot_load(str(rows))
        assert [p.name for p in written] == ["load.png"]
        assert written[0].stat().st_size > 0

    def test_plot_shard_sweep(self, tmp_path):
        """Should draw one chart per varying dimension."""
        reports = [_report(0, 10.0, shards=1), _report(0, 19.0, shards=2)]
        rows, samples = write_reports(reports, str(tmp_path), stem="sweep")
        written = plot_load(str(rows), out_dir=str(tmp_path / "charts"))
        assert [p.name for p in written] == ["sweep_shards.png"]
        assert plot_latency_cdf(str(samples)).exists()


class TestLoad:
    """Tests for in-process load runs."""

    def test_too_many_faults(self):
        """Should refuse more crashes than the committee tolerates."""
        with pytest.raises(ValueError):
            LocalCluster(4, 1, [], faults=2, mode="inprocess")

    async def test_transfer_load(self):
        """Should complete transfers against an in-process committee."""
        reports = await benchmark(
            "transfer", rate=20.0, duration=0.5, runs=1, mode="inprocess", accounts_per_shard=5, range_bits=8
        )
        (report,) = reports
        assert report.submitted > 0
        assert report.completed == report.submitted
        assert report.failed == 0
        assert report.latency_p50_ms > 0

    async def test_transfer_load_with_crash(self):
        """Should keep completing transfers with one authority down."""
        (report,) = await benchmark(
            "transfer", rate=10.0, duration=0.5, faults=1, runs=1, mode="inprocess", accounts_per_shard=3, range_bits=8
        )
        assert report.faults == 1
        assert report.completed > 0


@pytest.mark.slow
class TestMicrobench:
    """Tests for the coin cryptography timings."""

    def test_microbench_table(self, tmp_path):
        """Should time every step and write the table."""
        table = run_microbench(iterations=1, range_bits=8)
        assert list(table["step"]) == [
            "generate_request",
            "verify_request",
            "issue_share",
            "unblind_share",
            "verify_share",
            "aggregate_3_shares",
        ]
        assert (table["mean_ms"] > 0).all()
        assert write_microbench(table, str(tmp_path)).exists()
