"""
Admin and metrics HTTP API for an authority process.

Served next to the shard listeners when a metrics port is configured.
Read-only apart from the two admin commands (sweep, snapshot).
"""

import logging
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from ..core.uid import UID
from ..errors import ZefError
from ..utils.cache import verification_cache

logger = logging.getLogger(__name__)

app = FastAPI(
    title="Zef Authority API",
    description="Health, metrics and admin commands for one Zef authority",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
)

# the node this process serves
_node: Optional[Any] = None


def attach_node(node: Any) -> None:
    global _node
    _node = node


def get_node() -> Any:
    """The attached AuthorityNode, or 503 when none is running."""
    if _node is None:
        raise HTTPException(status_code=503, detail="no authority node attached")
    return _node


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    authority: str
    shards: List[int]
    cache_stats: Dict[str, Any]


class AccountResponse(BaseModel):
    account_id: str
    owner: Optional[str] = None
    balance: int
    next_sequence: int
    pending: bool
    spent: int
    received: int


class SweepResponse(BaseModel):
    removed: List[str] = Field(default_factory=list)
    total: int = 0


class SnapshotResponse(BaseModel):
    files: List[str]


@app.get("/", response_model=Dict[str, str])
async def root():
    """Root endpoint with API info."""
    return {"name": "Zef Authority API", "version": "1.0.0", "docs": "/docs"}


@app.get("/health", response_model=HealthResponse)
async def health_check():
    node = get_node()
    return HealthResponse(
        status="healthy",
        authority=node.name,
        shards=sorted(node.services),
        cache_stats=verification_cache.get_stats(),
    )


@app.get("/metrics")
async def metrics():
    """Per-shard request counts, error reasons, latency percentiles and histogram."""
    return get_node().get_stats()


@app.get("/accounts/{account_id}", response_model=AccountResponse)
async def get_account(account_id: str):
    node = get_node()
    try:
        uid = UID.parse(account_id)
        summary = node.account_summary(uid)
    except ZefError as e:
        raise HTTPException(status_code=400, detail=e.message)
    except KeyError:
        raise HTTPException(status_code=404, detail=f"{account_id} lives on a shard not hosted here")
    if summary is None:
        raise HTTPException(status_code=404, detail=f"{account_id} not found")
    return AccountResponse(**summary)


@app.post("/admin/sweep", response_model=SweepResponse)
async def sweep():
    """Delete ownerless accounts that can never become active again."""
    removed = get_node().sweep()
    logger.info(f"Admin sweep removed {len(removed)} accounts")
    return SweepResponse(removed=[str(uid) for uid in removed], total=len(removed))


@app.post("/admin/snapshot", response_model=SnapshotResponse)
async def snapshot():
    try:
        files = get_node().snapshot()
    except ValueError as e:
        raise HTTPException(status_code=409, detail=str(e))
    except Exception as e:
        logger.error(f"Snapshot failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))
    return SnapshotResponse(files=files)
