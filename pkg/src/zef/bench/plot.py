"""
Throughput / latency charts from a load CSV written by write_reports.
"""

import logging
from pathlib import Path
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .report import load_reports  # noqa: E402

logger = logging.getLogger(__name__)


def _twin_axes(frame: pd.DataFrame, x: str, title: str, xlabel: str, path: Path) -> Path:
    fig, ax = plt.subplots()
    ax.set_xlabel(xlabel)
    ax.set_ylabel("throughput (ops/s)")
    for workload, rows in frame.groupby("workload"):
        ax.errorbar(rows[x], rows["throughput_mean"], yerr=rows["throughput_std"], marker="o", label=f"{workload} tput")
    ax2 = ax.twinx()
    ax2.set_ylabel("p50 latency (ms)")
    for workload, rows in frame.groupby("workload"):
        ax2.errorbar(
            rows[x], rows["latency_p50_mean_ms"], yerr=rows["latency_p50_std_ms"],
            marker="x", linestyle="--", label=f"{workload} p50",
        )
    handles = ax.get_legend_handles_labels()
    handles2 = ax2.get_legend_handles_labels()
    ax.legend(handles[0] + handles2[0], handles[1] + handles2[1], loc="best")
    ax.grid(True)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def _summary(frame: pd.DataFrame, keys: List[str]) -> pd.DataFrame:
    summary = frame.groupby(keys).agg(
        throughput_mean=("throughput", "mean"),
        throughput_std=("throughput", "std"),
        latency_p50_mean_ms=("latency_p50_ms", "mean"),
        latency_p50_std_ms=("latency_p50_ms", "std"),
    )
    return summary.reset_index().fillna(0.0).sort_values(keys)


def plot_load(csv_path: str, out_dir: Optional[str] = None) -> List[Path]:
    """
    One chart per varying dimension present in the CSV: shards (sweep),
    offered rate, and crashed authorities.

    Returns:
        Paths of the written PNG files
    """
    frame = load_reports(csv_path)
    root = Path(out_dir) if out_dir else Path(csv_path).parent
    root.mkdir(parents=True, exist_ok=True)
    stem = Path(csv_path).stem
    written = []
    for column, label in (("shards", "shards per authority"), ("rate", "offered load (ops/s)"),
                          ("faults", "crashed authorities")):
        if frame[column].nunique() < 2:
            continue
        summary = _summary(frame, ["workload", column])
        written.append(
            _twin_axes(summary, column, f"Throughput / latency vs {label}", label, root / f"{stem}_{column}.png")
        )
    if not written:
        summary = _summary(frame, ["workload", "shards"])
        written.append(_twin_axes(summary, "shards", "Throughput / latency", "shards per authority",
                                  root / f"{stem}.png"))
    return written


def plot_latency_cdf(samples_csv: str, out_path: Optional[str] = None) -> Path:
    """Empirical latency CDF per (workload, shards) from a *_samples.csv."""
    frame = pd.read_csv(samples_csv)
    path = Path(out_path) if out_path else Path(samples_csv).with_suffix(".png")
    fig, ax = plt.subplots()
    for (workload, shards), rows in frame.groupby(["workload", "shards"]):
        values = rows["latency_ms"].sort_values().reset_index(drop=True)
        ax.plot(values, (values.index + 1) / len(values), label=f"{workload} shards={shards}")
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("fraction of operations")
    ax.grid(True)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path
