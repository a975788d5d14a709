"""
Logging setup shared by the CLI, authority processes and bench workers.

Every record carries a `node` field: the authority (and shard) a process
serves, or "-" for wallets and tools. Several authority processes logging
to one terminal stay readable, and with LOG_TO_FILE each node gets its own
rotating file next to LOG_FILE_PATH.
"""

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import List, Optional

DEFAULT_FORMAT = "%(asctime)s | %(levelname)-8s | %(node)s | %(name)s | %(message)s"

NOISY_LOGGERS = ("httpx", "asyncio", "uvicorn.access", "matplotlib")


class NodeLabelFilter(logging.Filter):
    """Stamps each record with the node label unless the caller set one."""

    def __init__(self, node: str = "-"):
        super().__init__()
        self.node = node

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "node"):
            record.node = self.node
        return True


def node_log_path(base: str, node: Optional[str]) -> str:
    """logs/zef.log + 'authority-0/1' -> logs/zef-authority-0-1.log"""
    if not node or node == "-":
        return base
    path = Path(base)
    tag = node.replace("/", "-")
    return str(path.with_name(f"{path.stem}-{tag}{path.suffix}"))


def setup_logging(
    level: Optional[int] = None,
    format_string: Optional[str] = None,
    node: Optional[str] = None,
) -> None:
    """
    Configure the root logger.

    Args:
        level: Logging level. If None, uses LOG_LEVEL from settings.
        format_string: Custom format; may use %(node)s.
        node: Label for this process, e.g. "authority-2" or "authority-2/0".
    """
    from ..config import settings

    if level is None:
        level = getattr(logging, settings.log_level.upper(), logging.INFO)
    format_string = format_string or DEFAULT_FORMAT
    label = NodeLabelFilter(node or "-")
    formatter = logging.Formatter(format_string, datefmt="%Y-%m-%d %H:%M:%S")

    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    path = node_log_path(settings.log_file_path, node)
    if settings.log_to_file:
        log_dir = os.path.dirname(path)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(
            RotatingFileHandler(
                path,
                maxBytes=settings.log_max_bytes,
                backupCount=settings.log_backup_count,
                encoding="utf-8",
            )
        )
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(label)

    logging.basicConfig(level=level, handlers=handlers, force=True)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging at {logging.getLevelName(level)} as {label.node}")
    if settings.log_to_file:
        logger.debug(f"Log file: {path}")


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
