"""
Tests for logging setup.
"""

import logging
from unittest.mock import patch

from src.zef.utils.logging import NodeLabelFilter, node_log_path, setup_logging


class TestNodeLabels:
    """Tests for per-node log labels."""

    def test_filter_stamps_missing_label(self):
        """Should add the node label to records without one."""
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "hello", None, None)
        assert NodeLabelFilter("authority-1/0").filter(record)
        assert record.node == "authority-1/0"

    def test_filter_keeps_explicit_label(self):
        """Should leave a label passed through `extra` alone."""
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "hello", None, None)
        record.node = "wallet"
        NodeLabelFilter("authority-1").filter(record)
        assert record.node == "wallet"

    def test_log_path_per_node(self):
        """Should give each authority shard its own file."""
        assert node_log_path("logs/zef.log", "authority-0/1") == "logs/zef-authority-0-1.log"
        assert node_log_path("logs/zef.log", None) == "logs/zef.log"
        assert node_log_path("logs/zef.log", "-") == "logs/zef.log"


class TestSetupLogging:
    """Tests for setup_logging."""

    def test_writes_node_file(self, tmp_path):
        """Should write labelled records to the node's rotating file."""
        with patch("src.zef.config.settings") as mock_settings:
            mock_settings.log_level = "INFO"
            mock_settings.log_to_file = True
            mock_settings.log_file_path = str(tmp_path / "zef.log")
            mock_settings.log_max_bytes = 1024 * 1024
            mock_settings.log_backup_count = 1
            setup_logging(node="authority-3")
            logging.getLogger("zef.test").info("shard up")
            for handler in logging.getLogger().handlers:
                handler.flush()

        content = (tmp_path / "zef-authority-3.log").read_text(encoding="utf-8")
        assert "| authority-3 | zef.test | shard up" in content
        setup_logging(level=logging.WARNING)
