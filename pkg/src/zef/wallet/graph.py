"""
LangGraph workflows for the wallet: one account operation, and a coin spend.

Account operation:

    prepare -> collect_votes -> certify -> confirm -> finish
                   |  ^                     |  ^
                   v  |                     v  |
                   sync <-------------------+--+

Coin spend:

    plan -> spend_inputs -> request_coins -> assemble

Every node is wrapped by create_safe_node; failures land in error_handler,
which finishes the flow when a certificate already exists and aborts it
otherwise.
"""

import logging
import traceback
from datetime import datetime
from functools import wraps
from typing import Any, Dict, List, Literal, Optional, Tuple

from langgraph.graph import END, START, StateGraph
from typing_extensions import TypedDict

from ..core.keys import KeyPair
from ..core.messages import AuthenticatedRequest, Certificate, Operation
from ..core.uid import UID
from ..errors import ZefError
from .conditions import (
    route_after_coin_request,
    route_after_confirm,
    route_after_error,
    route_after_spends,
    route_after_sync,
    route_after_votes,
)
from .flows import AccountOpFlow, CoinFlow

logger = logging.getLogger(__name__)


class AccountOpState(TypedDict, total=False):
    """State of one account operation flow."""

    # input
    account_id: UID
    operation: Operation
    new_key: Optional[KeyPair]

    # progress
    auth_request: AuthenticatedRequest
    votes: Dict[str, bytes]
    certificate: Optional[Certificate]
    acks: Dict[str, Any]
    phase: str  # votes / confirm
    lagging: List[str]
    sync_rounds: int
    workflow_status: str

    # timing (perf_counter seconds)
    started_at: float
    first_ack_at: Optional[float]

    # error handling
    error_message: Optional[str]
    error_traceback: Optional[str]
    error_reason: Optional[str]
    error_expected_sequence: Optional[int]
    error_authority: Optional[str]
    has_error: bool
    error_node: Optional[str]
    error_recoverable: bool
    node_timestamps: Dict[str, str]


class CoinFlowState(TypedDict, total=False):
    """State of one coin spend."""

    coin_kind: str  # opaque / transparent
    inputs: List[Any]
    withdrawals: Dict[UID, int]
    recipients: List[Tuple[UID, int]]

    bundle: Any
    output_secrets: Any
    transparent_outputs: Any
    spend_ops: List[Tuple[UID, Any]]
    spend_count: int
    spend_certificates: List[Certificate]
    coin_shares: Dict[int, Any]
    coin_votes: List[Any]
    coins: Tuple[Any, ...]
    workflow_status: str

    started_at: float
    finished_at: float

    error_message: Optional[str]
    error_traceback: Optional[str]
    error_reason: Optional[str]
    error_expected_sequence: Optional[int]
    error_authority: Optional[str]
    has_error: bool
    error_node: Optional[str]
    error_recoverable: bool
    node_timestamps: Dict[str, str]


def create_safe_node(node_name: str, node_func):
    """Wrap an async node so exceptions become error state instead of escaping the graph."""

    @wraps(node_func)
    async def safe_node(state: Dict[str, Any]) -> Dict[str, Any]:
        try:
            result = await node_func(state)
            timestamps = dict(state.get("node_timestamps", {}))
            timestamps[node_name] = datetime.now().isoformat()
            result["node_timestamps"] = timestamps
            return result
        except Exception as e:
            logger.warning(f"Exception in node '{node_name}': {e}")
            update = {
                "has_error": True,
                "error_message": str(e),
                "error_traceback": traceback.format_exc(),
                "error_node": node_name,
            }
            if isinstance(e, ZefError):
                update.update(
                    error_message=e.message,
                    error_reason=e.reason.value,
                    error_expected_sequence=e.expected_sequence,
                    error_authority=e.authority,
                )
            return update

    return safe_node


async def error_handler_node(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Decide what a failure means for the flow.

    A certificate that already exists is final, so failing to confirm it
    everywhere is reported but the flow still finishes.
    """
    error_node = state.get("error_node", "unknown")
    reason = state.get("error_reason") or "unexpected"
    recoverable = state.get("certificate") is not None
    if recoverable:
        logger.warning(f"'{error_node}' failed after certification ({reason}): {state.get('error_message')}")
    else:
        logger.error(f"'{error_node}' failed ({reason}): {state.get('error_message')}")
    return {"error_recoverable": recoverable, "workflow_status": "failed"}


def route_after_votes_with_error(state: Dict[str, Any]) -> Literal["error_handler", "sync", "certify"]:
    if state.get("has_error"):
        return "error_handler"
    return route_after_votes(state)


def route_after_confirm_with_error(state: Dict[str, Any]) -> Literal["error_handler", "sync", "finish"]:
    if state.get("has_error"):
        return "error_handler"
    return route_after_confirm(state)


def route_after_step(state: Dict[str, Any]) -> Literal["error_handler", "continue"]:
    return "error_handler" if state.get("has_error") else "continue"


def build_account_op_graph(flow: AccountOpFlow, safe_mode: bool = True):
    """
    Build and compile the account-operation workflow.

    Args:
        flow: node implementations bound to a client
        safe_mode: wrap nodes with error capture

    Returns:
        Compiled graph; run with `await graph.ainvoke({"account_id": ..., "operation": ...})`
    """
    nodes = {
        "prepare": flow.prepare,
        "collect_votes": flow.collect_votes,
        "sync": flow.sync,
        "certify": flow.certify,
        "confirm": flow.confirm,
        "finish": flow.finish,
    }
    workflow = StateGraph(AccountOpState)
    for name, func in nodes.items():
        workflow.add_node(name, create_safe_node(name, func) if safe_mode else func)
    workflow.add_node("error_handler", error_handler_node)

    workflow.add_edge(START, "prepare")
    workflow.add_conditional_edges(
        "prepare",
        route_after_step,
        {"error_handler": "error_handler", "continue": "collect_votes"},
    )
    workflow.add_conditional_edges(
        "collect_votes",
        route_after_votes_with_error,
        {"error_handler": "error_handler", "sync": "sync", "certify": "certify"},
    )
    workflow.add_conditional_edges(
        "sync",
        route_after_sync,
        {"error_handler": "error_handler", "collect_votes": "collect_votes", "confirm": "confirm"},
    )
    workflow.add_conditional_edges(
        "certify",
        route_after_step,
        {"error_handler": "error_handler", "continue": "confirm"},
    )
    workflow.add_conditional_edges(
        "confirm",
        route_after_confirm_with_error,
        {"error_handler": "error_handler", "sync": "sync", "finish": "finish"},
    )
    workflow.add_conditional_edges(
        "error_handler",
        route_after_error,
        {"finish": "finish", "abort": END},
    )
    workflow.add_edge("finish", END)
    return workflow.compile()


def build_coin_graph(flow: CoinFlow, safe_mode: bool = True):
    """Build and compile the coin spend workflow (opaque or transparent, per state['coin_kind'])."""
    nodes = {
        "plan": flow.plan,
        "spend_inputs": flow.spend_inputs,
        "request_coins": flow.request_coins,
        "assemble": flow.assemble,
    }
    workflow = StateGraph(CoinFlowState)
    for name, func in nodes.items():
        workflow.add_node(name, create_safe_node(name, func) if safe_mode else func)
    workflow.add_node("error_handler", error_handler_node)

    workflow.add_edge(START, "plan")
    workflow.add_conditional_edges(
        "plan",
        route_after_step,
        {"error_handler": "error_handler", "continue": "spend_inputs"},
    )
    workflow.add_conditional_edges(
        "spend_inputs",
        route_after_spends,
        {"error_handler": "error_handler", "request_coins": "request_coins"},
    )
    workflow.add_conditional_edges(
        "request_coins",
        route_after_coin_request,
        {"error_handler": "error_handler", "assemble": "assemble"},
    )
    workflow.add_conditional_edges(
        "assemble",
        route_after_step,
        {"error_handler": "error_handler", "continue": END},
    )
    workflow.add_edge("error_handler", END)
    return workflow.compile()

