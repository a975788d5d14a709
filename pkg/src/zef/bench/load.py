"""
Load generation: one generator per shard submitting at a fixed rate.

Every generator owns a pool of funded accounts living on its shard and
starts one operation per tick on an idle account, so the offered load does
not depend on how fast earlier operations finish. Ticks that find no idle
account are counted as backlog, not submitted.
"""

import asyncio
import logging
import random
import time
from typing import Dict, List, Optional, Sequence, Tuple

from ..config import settings
from ..core.committee import shard_for
from ..core.keys import KeyPair
from ..core.messages import Transfer
from ..core.uid import UID
from ..errors import ZefError
from ..wallet.client import GRAPH_CONFIG, ZefClient
from ..wallet.state import WalletState
from .cluster import ClusterMode, GenesisEntry, LocalCluster
from .report import BenchReport, Workload

logger = logging.getLogger(__name__)


def bench_genesis(shards: int, accounts_per_shard: int, balance: int, seed: int = 0) -> List[GenesisEntry]:
    """Root accounts spread so every shard gets `accounts_per_shard` of them."""
    rng = random.Random(seed)
    buckets: Dict[int, List[GenesisEntry]] = {shard: [] for shard in range(shards)}
    n = 1
    while any(len(bucket) < accounts_per_shard for bucket in buckets.values()):
        uid = UID.root(n)
        n += 1
        bucket = buckets[shard_for(uid, shards)]
        if len(bucket) < accounts_per_shard:
            key = KeyPair.from_seed(bytes(rng.getrandbits(8) for _ in range(32)))
            bucket.append((uid, key, balance))
    return [entry for shard in sorted(buckets) for entry in buckets[shard]]


class ShardGenerator:
    """
    Submits `workload` operations from the accounts of one shard.

    Args:
        cluster: the running committee
        accounts: (id, key) pairs on this shard
        all_ids: every funded id (transfer recipients are drawn from it)
        workload: "transfer" or "anon-coin"
        rate: operations per second for this generator
        seed: recipient choice
    """

    def __init__(
        self,
        cluster: LocalCluster,
        accounts: Sequence[Tuple[UID, KeyPair]],
        all_ids: Sequence[UID],
        workload: Workload,
        rate: float,
        seed: int,
    ):
        wallet = WalletState()
        for uid, key in accounts:
            wallet.add_account(uid, key)
        self.client = ZefClient(cluster.cfg, wallet, cluster.transport, params=cluster.params)
        self.idle: List[UID] = [uid for uid, _ in accounts]
        self.all_ids = list(all_ids)
        self.workload = workload
        self.interval = 1.0 / rate
        self.rng = random.Random(seed)
        self.samples_ms: List[float] = []
        self.submitted = 0
        self.failed = 0
        self.backlog = 0
        self.last_done = 0.0
        self._tasks: List[asyncio.Task] = []

    async def _transfer(self, account_id: UID) -> Optional[float]:
        recipient = self.rng.choice([uid for uid in self.all_ids if uid != account_id] or [account_id])
        submitted = time.perf_counter()
        final = await self.client.account_graph.ainvoke(
            {"account_id": account_id, "operation": Transfer(recipient, 1), "new_key": None}, config=GRAPH_CONFIG
        )
        first_ack = final.get("first_ack_at")
        if final.get("certificate") is None or first_ack is None:
            logger.debug(f"transfer from {account_id} failed: {final.get('error_message')}")
            return None
        return (first_ack - submitted) * 1000

    async def _anon_coin(self, account_id: UID) -> Optional[float]:
        submitted = time.perf_counter()
        await self.client.spend_and_create_coins([], {account_id: 2}, [(account_id, 1), (account_id, 1)])
        return (time.perf_counter() - submitted) * 1000

    async def _one(self, account_id: UID) -> None:
        try:
            if self.workload == "transfer":
                latency = await self._transfer(account_id)
            else:
                latency = await self._anon_coin(account_id)
        except ZefError as e:
            logger.debug(f"{self.workload} from {account_id} failed: {e}")
            latency = None
        if latency is None:
            self.failed += 1
        else:
            self.samples_ms.append(latency)
        self.last_done = time.perf_counter()
        self.idle.append(account_id)

    async def run(self, duration: float) -> None:
        loop = asyncio.get_running_loop()
        start = loop.time()
        tick = start
        while tick - start < duration:
            await asyncio.sleep(max(0.0, tick - loop.time()))
            if self.idle:
                account_id = self.idle.pop(0)
                self.submitted += 1
                self._tasks.append(asyncio.create_task(self._one(account_id)))
            else:
                self.backlog += 1
            tick += self.interval

    async def drain(self, timeout: float) -> None:
        if not self._tasks:
            return
        _, pending = await asyncio.wait(self._tasks, timeout=timeout)
        for task in pending:
            task.cancel()
        self.failed += len(pending)


async def run_load(
    cluster: LocalCluster,
    genesis: Sequence[GenesisEntry],
    workload: Workload,
    rate: float,
    duration: float,
    seed: int = 0,
    run: int = 0,
    drain_timeout: float = 30.0,
) -> BenchReport:
    """
    Offer `rate` operations per second for `duration` seconds, split evenly
    over one generator per shard, then wait for stragglers.
    """
    cfg = cluster.cfg
    shards = cfg.num_shards
    all_ids = [uid for uid, _, _ in genesis]
    generators = []
    for shard in range(shards):
        accounts = [(uid, key) for uid, key, _ in genesis if cfg.shard_of(uid) == shard]
        generators.append(ShardGenerator(cluster, accounts, all_ids, workload, rate / shards, seed * 1000 + shard))

    logger.info(f"Load: {workload} at {rate}/s for {duration}s on N={len(cfg.names)} shards={shards}")
    start = time.perf_counter()
    await asyncio.gather(*(g.run(duration) for g in generators))
    await asyncio.gather(*(g.drain(drain_timeout) for g in generators))
    end = max([g.last_done for g in generators] + [start + duration])

    backlog = sum(g.backlog for g in generators)
    if backlog:
        logger.warning(f"{backlog} ticks found no idle account; add accounts or lower the rate")
    report = BenchReport.from_samples(
        workload,
        len(cfg.names),
        shards,
        rate,
        duration,
        [s for g in generators for s in g.samples_ms],
        submitted=sum(g.submitted for g in generators),
        failed=sum(g.failed for g in generators),
        elapsed=end - start,
        faults=cluster.faults,
        run=run,
    )
    logger.info(report.line())
    return report


async def benchmark(
    workload: Workload,
    authorities: int = 4,
    shards: int = 1,
    rate: float = 100.0,
    duration: float = 10.0,
    faults: int = 0,
    runs: Optional[int] = None,
    seed: int = 0,
    mode: ClusterMode = "process",
    accounts_per_shard: int = 50,
    range_bits: Optional[int] = None,
) -> List[BenchReport]:
    """Repeat a load run on a fresh committee `runs` times (bench_runs by default)."""
    runs = settings.bench_runs if runs is None else runs
    genesis = bench_genesis(shards, accounts_per_shard, balance=10**9, seed=seed)
    reports = []
    for run in range(runs):
        cluster = LocalCluster(
            authorities,
            shards,
            genesis,
            faults=faults,
            mode=mode,
            range_bits=settings.range_bits if range_bits is None else range_bits,
            seed=seed,
        )
        async with cluster:
            reports.append(await run_load(cluster, genesis, workload, rate, duration, seed=seed, run=run))
    return reports


async def shard_sweep(
    shard_counts: Sequence[int],
    workload: Workload = "transfer",
    **kwargs,
) -> List[BenchReport]:
    reports: List[BenchReport] = []
    for shards in shard_counts:
        reports.extend(await benchmark(workload, shards=shards, **kwargs))
    return reports
