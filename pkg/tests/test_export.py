"""
Tests for simulator trace export.
"""

import json
import os
import tempfile

import pytest

from src.zef.core.messages import AccountInfoResponse
from src.zef.sim.checkers import run_checkers
from src.zef.sim.client import OpOutcome
from src.zef.sim.network import TraceEvent
from src.zef.sim.scenario import GenesisSpec, Scenario, ScriptOp
from src.zef.sim.trace import Trace
from src.zef.utils.export import TraceExporter
from tests.conftest import ALICE, key_from


class TestTraceExporter:
    """Tests for TraceExporter functionality."""

    @pytest.fixture
    def temp_export_dir(self):
        """Create a temporary directory for exports."""
        with tempfile.TemporaryDirectory() as tmpdir:
            yield tmpdir

    @pytest.fixture
    def scenario(self):
        return Scenario(
            name="unit/export",
            genesis=[GenesisSpec(account="1", key_seed="01" * 32, balance=10)],
            script=[ScriptOp(kind="transfer", account="1", recipient="2", amount=3)],
        )

    @pytest.fixture
    def trace(self):
        """A small hand-built trace."""
        info = AccountInfoResponse(ALICE, True, owner=key_from(1).public, balance=7, next_sequence=1)
        return Trace(
            scenario="unit/export",
            seed=7,
            digest="ab" * 32,
            initial_balances={ALICE: 10},
            live_authorities=["authority-0"],
            events=[TraceEvent(1, 1, "deliver", "client:wallet", "authority-0/0", 1, "00" * 8)],
            outcomes=[OpOutcome(0, "transfer", "1", status="certified")],
            final={"authority-0": {ALICE: info}},
        )

    def test_export_to_json(self, temp_export_dir, scenario, trace):
        """Should write a replayable JSON dump."""
        exporter = TraceExporter(export_dir=temp_export_dir)
        filepath = exporter.export_to_json(scenario, trace, run_checkers(trace))

        assert os.path.exists(filepath)
        assert filepath.endswith(".json")
        assert "unit_export" in os.path.basename(filepath)

        with open(filepath, encoding="utf-8") as f:
            data = json.load(f)
        assert data["verdict"]["passed"] is True
        assert data["final"]["authority-0"]["1"]["balance"] == 7
        assert data["events"][0]["action"] == "deliver"
        assert Scenario.model_validate(data["scenario"]) == scenario

    def test_export_to_markdown(self, temp_export_dir, scenario, trace):
        """Should write a readable report."""
        exporter = TraceExporter(export_dir=temp_export_dir)
        filepath = exporter.export_to_markdown(scenario, trace, run_checkers(trace))

        assert filepath.endswith(".md")
        with open(filepath, encoding="utf-8") as f:
            content = f.read()
        assert "# Simulator run `unit/export`" in content
        assert "**Verdict:** PASS" in content
        assert "| 0 | transfer | 1 | certified |  |" in content
        assert "## Violations" not in content

    def test_markdown_lists_violations(self, temp_export_dir, scenario, trace):
        """Should list checker violations of a failing run."""
        trace.spendable_samples = [11]
        exporter = TraceExporter(export_dir=temp_export_dir)
        filepath = exporter.export_to_markdown(scenario, trace, run_checkers(trace))
        with open(filepath, encoding="utf-8") as f:
            content = f.read()
        assert "## Violations" in content
        assert "### conservation" in content

    def test_event_log_is_cut(self, temp_export_dir, scenario, trace):
        """Should truncate long event logs."""
        trace.events = trace.events * 5
        exporter = TraceExporter(export_dir=temp_export_dir)
        filepath = exporter.export_to_markdown(scenario, trace, run_checkers(trace), max_events=2)
        with open(filepath, encoding="utf-8") as f:
            assert "... 3 more" in f.read()

    def test_list_exports(self, temp_export_dir, scenario, trace):
        """Should list exported files."""
        exporter = TraceExporter(export_dir=temp_export_dir)
        verdict = run_checkers(trace)
        exporter.export_to_json(scenario, trace, verdict)
        exporter.export_to_markdown(scenario, trace, verdict)

        exports = exporter.list_exports()
        assert len(exports) == 2
        assert {e["format"] for e in exports} == {"json", "md"}
