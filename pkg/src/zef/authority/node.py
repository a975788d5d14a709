"""
An authority process: one or more shard services, their router, the
network listeners and the optional admin/metrics API.
"""

import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..coins.params import PublicParams
from ..config import settings
from ..core.committee import CommitteeConfig
from ..core.uid import UID
from ..engine.state import AccountState
from ..engine.store import AccountStore
from .keyfile import AuthoritySecrets
from .net import start_tcp_server, start_udp_server
from .router import CrossShardRouter
from .shard import ShardService

logger = logging.getLogger(__name__)


class AuthorityNode:
    """
    Hosts `shards` of one authority in this process.

    Args:
        cfg: committee configuration
        secrets: this authority's key file
        shards: shard indexes to host (all of them by default)
        params: public coin parameters shared by the shards
        snapshot_dir: restore from / save to this directory when set
    """

    def __init__(
        self,
        cfg: CommitteeConfig,
        secrets: AuthoritySecrets,
        shards: Optional[Sequence[int]] = None,
        params: Optional[PublicParams] = None,
        snapshot_dir: Optional[str] = None,
    ):
        self.cfg = cfg
        self.name = secrets.name
        if self.name not in cfg.authorities:
            raise ValueError(f"{self.name} is not a committee member")
        self.snapshot_dir = snapshot_dir
        self.router = CrossShardRouter(cfg, self.name)
        self.services: Dict[int, ShardService] = {}
        for shard in shards if shards is not None else range(cfg.num_shards):
            service = ShardService(cfg, secrets, shard, store=self._restore(shard), params=params)
            self.router.register(service)
            self.services[shard] = service
        self._servers: List[asyncio.AbstractServer] = []
        self._udp: List[asyncio.BaseTransport] = []
        logger.info(f"{self.name}: hosting shards {sorted(self.services)} of {cfg.num_shards}")

    # ------------------------------------------------------------------
    # lookups across hosted shards
    # ------------------------------------------------------------------

    def service_for(self, account_id: UID) -> ShardService:
        shard = self.cfg.shard_of(account_id)
        if shard not in self.services:
            raise KeyError(f"shard {shard} is not hosted by this process")
        return self.services[shard]

    def lookup(self, account_id: UID) -> Optional[AccountState]:
        return self.service_for(account_id).engine.store.get(account_id)

    def is_retired(self, account_id: UID) -> bool:
        return self.service_for(account_id).engine.store.is_retired(account_id)

    # ------------------------------------------------------------------
    # admin
    # ------------------------------------------------------------------

    def sweep(self) -> List[UID]:
        """Deliver queued cross-shard effects, then delete records that can never become active."""
        self.router.drain()
        removed: List[UID] = []
        for service in self.services.values():
            removed.extend(service.engine.sweep(lookup=self.lookup, retired=self.is_retired))
        return removed

    def _snapshot_path(self, shard: int) -> Optional[Path]:
        if not self.snapshot_dir:
            return None
        return Path(self.snapshot_dir) / f"{self.name}-shard{shard}.snap"

    def _restore(self, shard: int) -> Optional[AccountStore]:
        path = self._snapshot_path(shard)
        if path is None or not path.exists():
            return None
        return AccountStore.load_snapshot(str(path))

    def snapshot(self) -> List[str]:
        if not self.snapshot_dir:
            raise ValueError("snapshots are disabled (no snapshot directory configured)")
        self.router.drain()
        written = []
        for shard, service in self.services.items():
            written.append(str(service.engine.store.save_snapshot(str(self._snapshot_path(shard)))))
        return written

    def account_summary(self, account_id: UID) -> Optional[dict]:
        state = self.lookup(account_id)
        if state is None:
            return None
        return {
            "account_id": str(account_id),
            "owner": state.owner.hex() if state.owner else None,
            "balance": state.balance,
            "next_sequence": state.next_sequence,
            "pending": state.pending is not None,
            "spent": len(state.spent),
            "received": len(state.received),
        }

    def get_stats(self) -> dict:
        return {
            "authority": self.name,
            "shards": {shard: service.get_stats() for shard, service in self.services.items()},
            "router": self.router.get_stats(),
        }

    # ------------------------------------------------------------------
    # serving
    # ------------------------------------------------------------------

    async def start(self, protocol: str = "tcp") -> None:
        """Bind every hosted shard's listeners as configured in the committee file."""
        for shard, service in self.services.items():
            endpoint = self.cfg.endpoint(self.name, shard)
            label = service.label
            self._servers.append(await start_tcp_server(service.handle_body, endpoint.host, endpoint.tcp_port, label))
            if protocol == "udp":
                if endpoint.udp_port is None:
                    raise ValueError(f"{label} has no UDP port in the committee file")
                self._udp.append(await start_udp_server(service.handle_body, endpoint.host, endpoint.udp_port, label))

    async def stop(self) -> None:
        for server in self._servers:
            server.close()
            await server.wait_closed()
        for transport in self._udp:
            transport.close()
        self._servers.clear()
        self._udp.clear()

    async def serve_forever(self, protocol: str = "tcp", metrics_port: Optional[int] = None) -> None:
        await self.start(protocol)
        tasks = [asyncio.create_task(self.router.run())]
        port = settings.metrics_port if metrics_port is None else metrics_port
        if port:
            tasks.append(asyncio.create_task(self._serve_api(port)))
        try:
            await asyncio.gather(*tasks)
        finally:
            for task in tasks:
                task.cancel()
            if self.snapshot_dir and settings.snapshot_enabled:
                self.snapshot()
            await self.stop()

    async def _serve_api(self, port: int) -> None:
        import uvicorn

        from .api import app, attach_node

        attach_node(self)
        server = uvicorn.Server(uvicorn.Config(app, host=settings.api_host, port=port, log_level="warning"))
        logger.info(f"{self.name}: admin/metrics API on {settings.api_host}:{port}")
        await server.serve()


async def serve_shard(
    cfg: CommitteeConfig,
    secrets: AuthoritySecrets,
    shard: Optional[int] = None,
    protocol: str = "tcp",
    metrics_port: Optional[int] = None,
) -> None:
    """Run one shard (or every shard when `shard` is None) until cancelled."""
    snapshot_dir = settings.snapshot_dir if settings.snapshot_enabled else None
    node = AuthorityNode(cfg, secrets, shards=None if shard is None else [shard], snapshot_dir=snapshot_dir)
    await node.serve_forever(protocol, metrics_port)
