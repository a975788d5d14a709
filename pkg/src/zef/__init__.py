"""
Zef: Byzantine-fault-tolerant payments with accounts, opaque coins and
transparent coins, run by a sharded committee of authorities.
"""

__version__ = "1.0.0"

from .config import Settings, settings
from .errors import ReasonCode, ZefError

__all__ = ["ReasonCode", "Settings", "ZefError", "__version__", "settings"]
