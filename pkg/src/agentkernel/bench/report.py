"""
Report emitters

CSV and JSON reports hold one row per syscall plus (JSON only) a summary
object. Only model-time figures are written, so two runs with the same
seed and config produce byte-identical files.
"""

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from ..core.llm_core import TEMPLATE_DIR
from ..utils.logger import get_logger
from .metrics import CallRecord, Metrics


logger = get_logger("agentkernel.report")

CSV_COLUMNS = ("agent_id", "seq", "kind", "created", "start", "end", "wait", "status")

# Ablation rows are labelled by mode; the baseline has no scheduler
ABLATION_LABELS = {"baseline": "none", "fifo": "fifo", "rr": "rr"}


def _number(value: Union[Fraction, float, int]) -> Union[int, float]:
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    return float(value)


def call_row(record: CallRecord) -> dict[str, Any]:
    return {
        "agent_id": record.agent_id,
        "seq": record.seq,
        "kind": record.kind,
        "created": _number(record.created),
        "start": _number(record.start),
        "end": _number(record.end),
        "wait": _number(record.wait),
        "status": record.status,
    }


def summary_of(metrics: Metrics, mode: str, strategy: Optional[str], seed: int) -> dict[str, Any]:
    return {
        "mode": mode,
        "strategy": strategy,
        "seed": seed,
        "num_calls": metrics.num_calls,
        "overall_time": _number(metrics.overall_time),
        "throughput": _number(metrics.throughput),
        "wait_avg": _number(metrics.wait_avg),
        "wait_p90": _number(metrics.wait_p90),
    }


def render_csv(metrics: Metrics) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for record in metrics.records:
        writer.writerow(call_row(record))
    return buffer.getvalue()


def render_json(metrics: Metrics, mode: str, strategy: Optional[str], seed: int) -> str:
    document = {
        "summary": summary_of(metrics, mode, strategy, seed),
        "calls": [call_row(r) for r in metrics.records],
    }
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def emit_report(path: Path, metrics: Metrics, mode: str, seed: int,
                strategy: Optional[str] = None) -> Path:
    """
    Write a report, choosing the format from the file suffix

    Args:
        path: Destination ending in .csv or .json
        metrics: Metrics of the run
        mode: fifo, rr or baseline
        seed: Workload seed
        strategy: Scheduling strategy; None for the baseline

    Raises:
        ValueError: unsupported suffix
        OSError: the file cannot be written
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        text = render_csv(metrics)
    elif suffix == ".json":
        text = render_json(metrics, mode, strategy, seed)
    else:
        raise ValueError(f"report format must be .csv or .json, got '{path.suffix}'")

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Report written to {path} ({metrics.num_calls} calls)")
    return path


def render_ablation(results: list, agents: int, calls_per_agent: int, seed: int) -> str:
    """Text table comparing the runs of an ablation"""
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
    )
    rows = [
        {
            "label": ABLATION_LABELS.get(r.mode, r.mode),
            "overall_time": float(r.metrics.overall_time),
            "throughput": float(r.metrics.throughput),
            "wait_avg": float(r.metrics.wait_avg),
            "wait_p90": float(r.metrics.wait_p90),
        }
        for r in results
    ]
    by_mode = {r.mode: r.metrics.overall_time for r in results}
    speedup = None
    if by_mode.get("fifo") and "baseline" in by_mode:
        speedup = float(by_mode["baseline"] / by_mode["fifo"])

    return env.get_template("ablation_table.j2").render(
        agents=agents, calls_per_agent=calls_per_agent, seed=seed, rows=rows, speedup=speedup,
    )
