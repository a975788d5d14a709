"""
Simulator trace export.

Writes a run's trace as JSON (full event log, replayable scenario, checker
results) or as a Markdown report for reading failures by eye.
"""

import json
import logging
import os
from datetime import datetime
from typing import TYPE_CHECKING, Any, Dict, List, Optional

from ..config import settings

if TYPE_CHECKING:
    from ..sim.checkers import Verdict
    from ..sim.scenario import Scenario
    from ..sim.trace import Trace

logger = logging.getLogger(__name__)


class TraceExporter:
    """
    Dump simulator traces for failure analysis and minimization.

    The JSON dump embeds the scenario, so `zef sim --scenario <dump>` replays it.
    """

    def __init__(self, export_dir: Optional[str] = None):
        self.export_dir = export_dir or settings.sim_trace_dir
        os.makedirs(self.export_dir, exist_ok=True)
        logger.debug(f"Trace exporter initialized (dir={self.export_dir})")

    def _generate_filename(self, name: str, format: str) -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        safe_name = name.replace("/", "_").replace("\\", "_")
        return f"trace_{safe_name}_{timestamp}.{format}"

    def export_to_json(self, scenario: "Scenario", trace: "Trace", verdict: "Verdict") -> str:
        """
        Args:
            scenario: the scenario that produced the trace
            trace: the run
            verdict: checker results

        Returns:
            Path to exported file
        """
        export_data = {
            "export_timestamp": datetime.now().isoformat(),
            "summary": trace.summary(),
            "verdict": verdict.to_dict(),
            "scenario": scenario.model_dump(),
            "outcomes": [o.to_dict() for o in trace.outcomes],
            "final": {
                name: {str(uid): self._serialize_info(info) for uid, info in answers.items()}
                for name, answers in trace.final.items()
            },
            "spendable_samples": trace.spendable_samples,
            "events": [e.to_dict() for e in trace.events],
        }

        filepath = os.path.join(self.export_dir, self._generate_filename(scenario.name, "json"))
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(export_data, f, indent=2, ensure_ascii=False, default=str)

        logger.info(f"Exported trace to JSON: {filepath}")
        return filepath

    def export_to_markdown(self, scenario: "Scenario", trace: "Trace", verdict: "Verdict", max_events: int = 200) -> str:
        """Human-readable report; the event log is cut at max_events lines."""
        summary = trace.summary()
        lines = [
            f"# Simulator run `{scenario.name}`",
            "",
            f"**Seed:** {scenario.seed}",
            f"**Digest:** `{trace.digest}`",
            f"**Export Time:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}",
            "",
            "---",
            "",
            "## Summary",
            "",
            f"- **Authorities:** {scenario.authorities} ({scenario.shards} shards each)",
            f"- **Live at the end:** {', '.join(trace.live_authorities)}",
            f"- **Steps:** {summary['steps']}",
            f"- **Certificates:** {summary['certificates']}",
            f"- **Coins:** {summary['coins']}",
            f"- **Genesis total:** {trace.genesis_total}",
            f"- **Outcomes:** {summary['outcomes']}",
            f"- **Verdict:** {'PASS' if verdict.passed else 'FAIL'}",
            "",
        ]

        failed = verdict.failed_checkers()
        if failed:
            lines.extend(["---", "", "## Violations", ""])
            for name in failed:
                lines.append(f"### {name}")
                lines.append("")
                lines.extend(f"- {v}" for v in verdict.violations[name])
                lines.append("")

        lines.extend(["---", "", "## Script", "", "| # | kind | account | status | reason |", "|---|---|---|---|---|"])
        for o in trace.outcomes:
            lines.append(f"| {o.index} | {o.kind} | {o.account} | {o.status} | {o.reason or ''} |")
        lines.append("")

        lines.extend(["---", "", "## Events", "", "```"])
        lines.extend(e.line() for e in trace.events[:max_events])
        if len(trace.events) > max_events:
            lines.append(f"... {len(trace.events) - max_events} more")
        lines.extend(["```", ""])

        filepath = os.path.join(self.export_dir, self._generate_filename(scenario.name, "md"))
        with open(filepath, "w", encoding="utf-8") as f:
            f.write("\n".join(lines))

        logger.info(f"Exported trace to Markdown: {filepath}")
        return filepath

    def _serialize_info(self, info: Any) -> Dict[str, Any]:
        return {
            "present": info.present,
            "owner": info.owner.hex() if info.owner else None,
            "balance": info.balance,
            "next_sequence": info.next_sequence,
            "spent": [m.hex() for m in info.spent],
            "received_count": info.received_count,
        }

    def list_exports(self) -> List[Dict[str, Any]]:
        """List all exported traces."""
        exports = []
        for filename in os.listdir(self.export_dir):
            filepath = os.path.join(self.export_dir, filename)
            if os.path.isfile(filepath):
                stat = os.stat(filepath)
                exports.append({
                    "filename": filename,
                    "path": filepath,
                    "size_bytes": stat.st_size,
                    "created": datetime.fromtimestamp(stat.st_ctime).isoformat(),
                    "format": filename.split(".")[-1],
                })
        return sorted(exports, key=lambda x: x["created"], reverse=True)
