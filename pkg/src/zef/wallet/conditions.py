"""
Routing logic for the wallet flows - where does the graph go next?

Each function looks at the current state and names the next node.
Lagging authorities get a sync round (bounded by max_sync_rounds) before the
same step is tried again.
"""

from typing import Any, Dict, Literal

from ..config import settings


def _can_sync(state: Dict[str, Any]) -> bool:
    return bool(state.get("lagging")) and state.get("sync_rounds", 0) < settings.max_sync_rounds


def route_after_votes(state: Dict[str, Any]) -> Literal["error_handler", "sync", "certify"]:
    """
    After collecting votes:
    - quorum of valid votes -> aggregate the certificate
    - short, but some authorities are behind -> sync them and ask again
    - otherwise -> error handler
    """
    if state.get("workflow_status") == "voted":
        return "certify"
    if _can_sync(state):
        return "sync"
    return "error_handler"


def route_after_confirm(state: Dict[str, Any]) -> Literal["error_handler", "sync", "finish"]:
    if state.get("workflow_status") == "confirmed":
        return "finish"
    if _can_sync(state):
        return "sync"
    return "error_handler"


def route_after_sync(state: Dict[str, Any]) -> Literal["error_handler", "collect_votes", "confirm"]:
    """Back to whichever broadcast sent us here."""
    if state.get("has_error"):
        return "error_handler"
    if state.get("phase") == "confirm":
        return "confirm"
    return "collect_votes"


def route_after_error(state: Dict[str, Any]) -> Literal["finish", "abort"]:
    """
    A certificate is final no matter what happened afterwards, so a flow
    that already holds one finishes normally; anything else aborts.
    """
    if state.get("certificate") is not None:
        return "finish"
    return "abort"


def route_after_spends(state: Dict[str, Any]) -> Literal["error_handler", "request_coins"]:
    if state.get("has_error") or len(state.get("spend_certificates", [])) < state.get("spend_count", 0):
        return "error_handler"
    return "request_coins"


def route_after_coin_request(state: Dict[str, Any]) -> Literal["error_handler", "assemble"]:
    if state.get("has_error"):
        return "error_handler"
    return "assemble"
