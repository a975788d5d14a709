"""Utility modules: logging setup, verification cache, retry tracking, trace export."""

from .cache import VerificationCache, verification_cache
from .export import TraceExporter
from .logging import get_logger, setup_logging
from .retry_tracker import RetryTracker, get_retry_tracker

__all__ = [
    "RetryTracker",
    "TraceExporter",
    "VerificationCache",
    "get_logger",
    "get_retry_tracker",
    "setup_logging",
    "verification_cache",
]
