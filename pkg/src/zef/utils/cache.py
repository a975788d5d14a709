"""
Verified-certificate cache.

Certificates are re-sent a lot (retries, replays, cross-shard deliveries).
Checking N-f Ed25519 signatures every time is wasted work, so we remember
the hashes of certificates that already verified. LRU via OrderedDict.
"""

import hashlib
import logging
from collections import OrderedDict
from typing import Any, Dict, Optional

from ..config import settings

logger = logging.getLogger(__name__)


class VerificationCache:
    """
    Simple LRU set of byte strings known to verify.

    Only positive results are cached: a certificate that failed once may be
    re-checked (it costs the attacker as much as us).
    """

    def __init__(self, max_size: Optional[int] = None, enabled: Optional[bool] = None):
        self.max_size = max_size or settings.cache_max_size
        self._cache: "OrderedDict[bytes, bool]" = OrderedDict()
        self._enabled = settings.enable_cache if enabled is None else enabled
        self._hits = 0
        self._misses = 0
        logger.debug(f"Verification cache initialized (max_size={self.max_size})")

    @staticmethod
    def _generate_key(scope: bytes, data: bytes) -> bytes:
        return hashlib.sha256(scope + b"|" + data).digest()

    def contains(self, scope: bytes, data: bytes) -> bool:
        if not self._enabled:
            return False
        key = self._generate_key(scope, data)
        if key not in self._cache:
            self._misses += 1
            return False
        self._cache.move_to_end(key)
        self._hits += 1
        return True

    def add(self, scope: bytes, data: bytes) -> None:
        if not self._enabled:
            return
        key = self._generate_key(scope, data)
        while len(self._cache) >= self.max_size:
            oldest_key = next(iter(self._cache))
            del self._cache[oldest_key]
        self._cache[key] = True

    def clear(self) -> None:
        self._cache.clear()
        logger.info("Verification cache cleared")

    def get_stats(self) -> Dict[str, Any]:
        return {
            "total_entries": len(self._cache),
            "max_size": self.max_size,
            "hits": self._hits,
            "misses": self._misses,
            "enabled": self._enabled,
        }

    def enable(self) -> None:
        self._enabled = True

    def disable(self) -> None:
        self._enabled = False


# Global cache instance
verification_cache = VerificationCache()
