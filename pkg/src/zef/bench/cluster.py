"""
Local committees for load runs.

"process" mode starts one OS process per (authority, shard) listening on
loopback TCP, the way a deployment runs them. "inprocess" mode keeps every
node in the benchmark process behind InProcessTransport; it is what the
test suite uses.
"""

import asyncio
import logging
import multiprocessing
import random
import socket
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from ..authority.keyfile import AuthoritySecrets, generate_committee
from ..authority.node import AuthorityNode, serve_shard
from ..coins.params import PublicParams, setup
from ..core.committee import CommitteeConfig
from ..core.keys import KeyPair
from ..core.uid import UID
from ..errors import ProtocolError, ReasonCode
from ..utils.logging import setup_logging
from ..wallet.transport import InProcessTransport, TcpTransport, Transport

logger = logging.getLogger(__name__)

ClusterMode = Literal["process", "inprocess"]
GenesisEntry = Tuple[UID, KeyPair, int]


def _port_free(port: int) -> bool:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind(("127.0.0.1", port))
        except OSError:
            return False
    return True


def find_free_base_port(count: int, attempts: int = 50) -> int:
    """A base port such that base .. base + 2*count are all bindable right now."""
    rng = random.Random()
    for _ in range(attempts):
        base = rng.randrange(20000, 60000 - 2 * count, 2)
        if all(_port_free(base + i) for i in range(2 * count)):
            return base
    raise ProtocolError(ReasonCode.TARGET_UNREACHABLE, f"no free range of {2 * count} loopback ports")


def _serve_process(cfg_json: str, secrets_json: str, shard: int, log_level: int) -> None:
    cfg = CommitteeConfig.model_validate_json(cfg_json)
    secrets = AuthoritySecrets.model_validate_json(secrets_json)
    setup_logging(level=log_level, node=f"{secrets.name}/{shard}")
    try:
        asyncio.run(serve_shard(cfg, secrets, shard, metrics_port=0))
    except KeyboardInterrupt:
        pass


class LocalCluster:
    """
    A committee of `authorities` x `shards` on this machine.

    Args:
        authorities: committee size N
        shards: shards per authority
        genesis: funded root accounts (id, owner key, balance)
        faults: crash the first `faults` authorities (never started)
        mode: "process" or "inprocess"
        range_bits: coin value range for anon-coin workloads
        seed: makes the dealt keys reproducible
    """

    def __init__(
        self,
        authorities: int,
        shards: int,
        genesis: Sequence[GenesisEntry],
        faults: int = 0,
        mode: ClusterMode = "process",
        range_bits: int = 32,
        seed: Optional[int] = None,
    ):
        if faults > (authorities - 1) // 3:
            raise ValueError(f"{faults} crashes exceed f for N={authorities}")
        self.mode = mode
        self.faults = faults
        base_port = find_free_base_port(authorities * shards) if mode == "process" else 0
        self.cfg, self.secrets = generate_committee(
            authorities,
            num_shards=shards,
            genesis=[(uid, key.public, balance) for uid, key, balance in genesis],
            base_port=base_port,
            range_bits=range_bits,
            seed=seed,
        )
        self.crashed: List[str] = self.cfg.names[:faults]
        self.params: PublicParams = setup(self.cfg.params_seed, range_bits=self.cfg.range_bits)
        self._processes: List[multiprocessing.Process] = []
        self._nodes: Dict[str, AuthorityNode] = {}
        self._transport: Optional[Transport] = None

    def live(self) -> List[str]:
        return [name for name in self.cfg.names if name not in self.crashed]

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    async def start(self, ready_timeout: float = 30.0) -> None:
        if self.mode == "inprocess":
            self._nodes = {
                name: AuthorityNode(self.cfg, secrets, params=self.params) for name, secrets in self.secrets.items()
            }
            transport = InProcessTransport(self._nodes.values())
            for name in self.crashed:
                transport.crash(name)
            self._transport = transport
            logger.info(f"In-process cluster: {len(self._nodes)} authorities, {len(self.crashed)} crashed")
            return

        ctx = multiprocessing.get_context("spawn")
        cfg_json = self.cfg.model_dump_json()
        level = logging.getLogger().getEffectiveLevel()
        for name in self.live():
            for shard in range(self.cfg.num_shards):
                process = ctx.Process(
                    target=_serve_process,
                    args=(cfg_json, self.secrets[name].model_dump_json(), shard, max(level, logging.WARNING)),
                    name=f"{name}-shard{shard}",
                    daemon=True,
                )
                process.start()
                self._processes.append(process)
        logger.info(f"Started {len(self._processes)} shard processes ({len(self.crashed)} authorities crashed)")
        await self.wait_ready(ready_timeout)
        self._transport = TcpTransport(self.cfg)

    async def wait_ready(self, timeout: float) -> None:
        """
        Raises:
            ProtocolError: TargetUnreachable if a live shard does not accept connections in time
        """
        loop = asyncio.get_running_loop()
        deadline = loop.time() + timeout
        for name in self.live():
            for shard in range(self.cfg.num_shards):
                endpoint = self.cfg.endpoint(name, shard)
                while True:
                    try:
                        _, writer = await asyncio.open_connection(endpoint.host, endpoint.tcp_port)
                        writer.close()
                        break
                    except OSError:
                        if loop.time() > deadline:
                            raise ProtocolError(
                                ReasonCode.TARGET_UNREACHABLE,
                                f"{name}/{shard} not listening on {endpoint.host}:{endpoint.tcp_port}",
                            )
                        await asyncio.sleep(0.1)

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            raise RuntimeError("cluster is not started")
        return self._transport

    async def stop(self) -> None:
        if self._transport is not None:
            await self._transport.close()
            self._transport = None
        for process in self._processes:
            process.terminate()
        for process in self._processes:
            process.join(timeout=5)
        self._processes.clear()
        self._nodes.clear()

    async def __aenter__(self) -> "LocalCluster":
        await self.start()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.stop()
