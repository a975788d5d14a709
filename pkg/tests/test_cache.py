"""
Tests for the verified-certificate cache.
"""

from unittest.mock import patch

from src.zef.utils.cache import VerificationCache


class TestVerificationCache:
    """Tests for VerificationCache functionality."""

    def test_cache_initialization(self):
        """Should take its size from settings when none is given."""
        with patch("src.zef.utils.cache.settings") as mock_settings:
            mock_settings.cache_max_size = 50
            mock_settings.enable_cache = True
            cache = VerificationCache()
            assert cache.max_size == 50
            assert cache._enabled is True

    def test_add_and_contains(self):
        """Should remember bytes that were added."""
        cache = VerificationCache(max_size=10, enabled=True)
        cache.add(b"cert", b"abc")
        assert cache.contains(b"cert", b"abc")
        assert not cache.contains(b"cert", b"abd")

    def test_scopes_are_separate(self):
        """Should not confuse the same bytes under another scope."""
        cache = VerificationCache(max_size=10, enabled=True)
        cache.add(b"cert", b"abc")
        assert not cache.contains(b"coin", b"abc")

    def test_lru_eviction(self):
        """Should evict the least recently used entry when full."""
        cache = VerificationCache(max_size=2, enabled=True)
        cache.add(b"s", b"1")
        cache.add(b"s", b"2")
        assert cache.contains(b"s", b"1")
        cache.add(b"s", b"3")
        assert cache.contains(b"s", b"1")
        assert not cache.contains(b"s", b"2")
        assert cache.contains(b"s", b"3")

    def test_stats(self):
        """Should count hits and misses."""
        cache = VerificationCache(max_size=10, enabled=True)
        cache.add(b"s", b"x")
        cache.contains(b"s", b"x")
        cache.contains(b"s", b"y")
        stats = cache.get_stats()
        assert stats["hits"] == 1
        assert stats["misses"] == 1
        assert stats["total_entries"] == 1

    def test_disabled(self):
        """Should neither store nor report entries while disabled."""
        cache = VerificationCache(max_size=10, enabled=False)
        cache.add(b"s", b"x")
        assert not cache.contains(b"s", b"x")
        cache.enable()
        cache.add(b"s", b"x")
        assert cache.contains(b"s", b"x")
        cache.disable()
        assert not cache.contains(b"s", b"x")

    def test_clear(self):
        """Should forget everything on clear."""
        cache = VerificationCache(max_size=10, enabled=True)
        cache.add(b"s", b"x")
        cache.clear()
        assert cache.get_stats()["total_entries"] == 0
