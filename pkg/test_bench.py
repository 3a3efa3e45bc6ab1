#!/usr/bin/env python3
"""
Test the benchmark harness: workloads, metrics, baseline, reports and the CLI
"""

import csv
import json
import sys
import threading
from fractions import Fraction
from pathlib import Path
from types import SimpleNamespace

sys.path.insert(0, str(Path(__file__).parent / 'src'))

import pytest
from pydantic import ValidationError as PydanticValidationError

import agentkernel.utils.logger as logger_module
from agentkernel.__main__ import main
from agentkernel.bench.baseline import LockstepGate
from agentkernel.bench.harness import (
    ablate,
    action_counts,
    check_timestamps,
    fit_sweep,
    run_baseline_mode,
    run_kernel_mode,
    run_mode,
    sweep_agents,
)
from agentkernel.bench.metrics import CallRecord, Metrics, fit_linear, percentile
from agentkernel.bench.report import CSV_COLUMNS, emit_report, render_ablation, render_csv, render_json
from agentkernel.bench.workload import ActionMix, Bimodal, Uniform, WorkloadSpec, plan_workload
from agentkernel.core.errors import FitError, HarnessError
from agentkernel.sdk.types import ActionType


def record(agent_id, created, end, status="done", seq=0, start=None):
    return CallRecord(agent_id=agent_id, seq=seq, kind="llm", created=Fraction(created),
                      start=Fraction(created if start is None else start), end=Fraction(end), status=status)


@pytest.fixture(autouse=True)
def log_file(tmp_path, monkeypatch):
    monkeypatch.setattr(logger_module, "LOG_FILE", tmp_path / "agentkernel.log")


# -- workloads ------------------------------------------------------------

def test_plan_is_deterministic():
    spec = WorkloadSpec(num_agents=3, calls_per_agent=4, prompt_tokens=Uniform(low=5, high=10),
                        mix=ActionMix(chat=0.5, tool_use=0.25, file_operation=0.25), seed=7)
    first = [[p.query.model_dump() for p in plan] for plan in plan_workload(spec)]
    second = [[p.query.model_dump() for p in plan] for plan in plan_workload(spec)]
    assert first == second
    assert len(first) == 3 and all(len(plan) == 4 for plan in first)


def test_prompt_and_output_lengths():
    spec = WorkloadSpec(num_agents=4, calls_per_agent=25, prompt_tokens=40,
                        output_tokens=Bimodal(short=20, long=200, p_long=0.1), seed=1)
    for plan in plan_workload(spec):
        for item in plan:
            assert len(item.query.messages[0]["content"].split()) == 40
            assert item.query.params["max_new_tokens"] in (20, 200)
            assert item.query.params["length_policy"] == "exact"


def test_action_mix_validation():
    with pytest.raises(PydanticValidationError):
        ActionMix(chat=0.5, tool_use=0.1)
    with pytest.raises(PydanticValidationError):
        Uniform(low=5, high=2)
    spec = WorkloadSpec(num_agents=2, calls_per_agent=10, mix=ActionMix(chat=0, tool_use=0, file_operation=1))
    assert action_counts(spec)[ActionType.FILE_OPERATION] == 20


def test_tool_use_without_tools_is_rejected():
    spec = WorkloadSpec(num_agents=1, mix=ActionMix(chat=0, tool_use=1))
    with pytest.raises(HarnessError):
        plan_workload(spec, tools=[])


# -- metrics --------------------------------------------------------------

def test_metrics_of_two_job_schedules():
    fifo = Metrics.from_records([record(1, 0, 30), record(2, 0, 40)])
    assert fifo.wait_avg == 35
    assert fifo.overall_time == 40
    assert fifo.throughput == Fraction(2, 40)
    rr = Metrics.from_records([record(1, 0, 40), record(2, 0, 20)])
    assert rr.wait_avg == 30
    assert max(r.wait for r in rr.records) == 40


def test_empty_metrics():
    metrics = Metrics.from_records([])
    assert metrics.overall_time == 0 and metrics.throughput == 0 and metrics.num_calls == 0


def test_failed_calls_do_not_count_toward_throughput():
    metrics = Metrics.from_records([record(1, 0, 10), record(2, 0, 20, status="failed")])
    assert metrics.completed == 1
    assert metrics.throughput == Fraction(1, 20)


def test_percentile_linear():
    assert percentile([1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 90) == pytest.approx(9.1)
    assert percentile([], 90) == 0.0


def test_fit_linear():
    fit = fit_linear([(1, 3), (2, 5), (3, 7), (4, 9)])
    assert fit.slope == pytest.approx(2)
    assert fit.intercept == pytest.approx(1)
    assert fit.r_squared == pytest.approx(1)
    with pytest.raises(FitError):
        fit_linear([(1, 3)])
    with pytest.raises(FitError):
        fit_linear([(2, 3), (2, 4)])


# -- reports --------------------------------------------------------------

def test_empty_csv_is_header_only():
    assert render_csv(Metrics()) == ",".join(CSV_COLUMNS) + "\n"


def test_emit_report_formats(tmp_path):
    metrics = Metrics.from_records([record(1, 0, 30), record(2, 0, Fraction(81, 2), start=30)])
    csv_path = emit_report(tmp_path / "out.csv", metrics, "fifo", seed=3, strategy="fifo")
    rows = list(csv.DictReader(csv_path.open(encoding="utf-8")))
    assert [row["end"] for row in rows] == ["30", "40.5"]
    assert rows[1]["wait"] == "40.5"

    json_path = emit_report(tmp_path / "out.json", metrics, "fifo", seed=3, strategy="fifo")
    document = json.loads(json_path.read_text(encoding="utf-8"))
    assert document["summary"] == {
        "mode": "fifo", "strategy": "fifo", "seed": 3, "num_calls": 2, "overall_time": 40.5,
        "throughput": pytest.approx(2 / 40.5), "wait_avg": pytest.approx(35.25), "wait_p90": pytest.approx(39.45),
    }
    assert document["calls"][0] == {"agent_id": 1, "seq": 0, "kind": "llm", "created": 0, "start": 0,
                                    "end": 30, "wait": 30, "status": "done"}
    with pytest.raises(ValueError):
        emit_report(tmp_path / "out.txt", metrics, "fifo", seed=3)


# -- harness --------------------------------------------------------------

def test_kernel_mode_runs_every_call():
    spec = WorkloadSpec(num_agents=4, calls_per_agent=3,
                        mix=ActionMix(chat=0.5, tool_use=0.25, file_operation=0.25), seed=2)
    result = run_kernel_mode(spec, "fifo")
    assert result.metrics.num_calls >= 12
    assert all(r.status == "done" for r in result.metrics.records)
    assert all(len(responses) == 3 for responses in result.responses.values())


def test_zero_agents():
    result = run_kernel_mode(WorkloadSpec(num_agents=0))
    assert result.metrics.num_calls == 0 and result.metrics.overall_time == 0


def test_agent_limit_is_a_harness_error():
    with pytest.raises(HarnessError):
        run_kernel_mode(WorkloadSpec(num_agents=3), config={"scheduler.max_concurrent_agents": 2})


def test_unknown_mode():
    with pytest.raises(HarnessError):
        run_mode("lifo", WorkloadSpec(num_agents=1))


def stamped(call_id, created, start, end):
    return SimpleNamespace(call_id=call_id, created_time=Fraction(created),
                           start_time=Fraction(start), end_time=Fraction(end))


def test_check_timestamps():
    check_timestamps([stamped(1, 0, 0, 0), stamped(2, 1, 3, 5)])
    with pytest.raises(HarnessError, match="call 3"):
        check_timestamps([stamped(1, 0, 1, 2), stamped(3, 2, 1, 4)])
    with pytest.raises(HarnessError, match="call 4"):
        check_timestamps([stamped(4, 0, 3, 2)])


@pytest.mark.parametrize("mode", ["fifo", "rr", "baseline"])
def test_tool_workloads_are_deterministic(mode):
    spec = WorkloadSpec(num_agents=6, calls_per_agent=3, mix=ActionMix(chat=0.2, tool_use=0.8), seed=5)
    first = run_mode(mode, spec)
    second = run_mode(mode, spec)
    assert first.metrics.records == second.metrics.records
    assert any(r.kind == "tool" for r in first.metrics.records)


def test_lockstep_gate_grants_in_time_order():
    gate = LockstepGate()
    requests = {1: [5, 9], 2: [1, 7], 3: [3, 3], 4: [8]}
    granted = []
    for _ in requests:
        gate.join()

    def agent(aid, times):
        for t in times:
            with gate.turn(aid, Fraction(t)):
                granted.append((t, aid))
        gate.leave()

    threads = [threading.Thread(target=agent, args=item, daemon=True) for item in requests.items()]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=5)
    assert granted == sorted((t, aid) for aid, times in requests.items() for t in times)


def test_single_agent_baseline_matches_fifo():
    spec = WorkloadSpec(num_agents=1, calls_per_agent=3, seed=4)
    fifo = run_kernel_mode(spec, "fifo")
    baseline = run_baseline_mode(spec)
    assert baseline.metrics.records == fifo.metrics.records
    assert baseline.failed_attempts == 0


def test_contention_makes_baseline_slower():
    spec = WorkloadSpec(num_agents=2, calls_per_agent=1, seed=0)
    fifo = run_kernel_mode(spec, "fifo")
    baseline = run_baseline_mode(spec)
    assert baseline.metrics.overall_time > fifo.metrics.overall_time
    assert baseline.failed_attempts >= 1
    assert baseline.metrics.texts() == fifo.metrics.texts()


def test_no_waste_no_backoff_approaches_fifo():
    spec = WorkloadSpec(num_agents=3, calls_per_agent=2, seed=6)
    fifo = run_kernel_mode(spec, "fifo")
    free = run_baseline_mode(spec, overrides={"core.failed_attempt_waste": 0, "bench.retry_backoff": 0})
    costly = run_baseline_mode(spec)
    assert fifo.metrics.overall_time <= free.metrics.overall_time <= costly.metrics.overall_time


def test_retry_limit_fails_calls():
    spec = WorkloadSpec(num_agents=3, calls_per_agent=1, seed=0)
    result = run_baseline_mode(spec, overrides={"bench.retry_limit": 0})
    statuses = sorted(r.status for r in result.metrics.records)
    assert statuses == ["done", "failed", "failed"]


def test_runs_are_deterministic():
    spec = WorkloadSpec(num_agents=5, calls_per_agent=2, output_tokens=Bimodal(short=5, long=30, p_long=0.3), seed=9)
    first = run_kernel_mode(spec, "rr", overrides={"scheduler.time_slice": 4})
    second = run_kernel_mode(spec, "rr", overrides={"scheduler.time_slice": 4})
    assert render_json(first.metrics, "rr", "rr", 9) == render_json(second.metrics, "rr", "rr", 9)


def test_sweep_and_fit():
    spec = WorkloadSpec(num_agents=1, calls_per_agent=2, seed=3)
    rows = sweep_agents(spec, [1, 2, 4])
    assert [row.num_agents for row in rows] == [1, 2, 4]
    assert rows[0].overall_time < rows[1].overall_time < rows[2].overall_time
    assert fit_sweep(rows).slope > 0
    with pytest.raises(HarnessError):
        sweep_agents(spec, [4, 2])


def test_ablation_table():
    spec = WorkloadSpec(num_agents=3, calls_per_agent=1, seed=1)
    results = ablate(spec)
    assert [r.mode for r in results] == ["baseline", "fifo", "rr"]
    table = render_ablation(results, 3, 1, 1)
    lines = table.splitlines()
    assert lines[0].startswith("Scheduling ablation (3 agents x 1 calls, seed 1)")
    assert [line.split()[0] for line in lines[3:6]] == ["none", "fifo", "rr"]
    assert "baseline / fifo overall_time" in table


# -- command line ---------------------------------------------------------

def test_cli_run_writes_identical_reports(tmp_path):
    args = ["run", "--mode", "fifo", "--agents", "3", "--calls-per-agent", "2", "--seed", "5"]
    assert main(args + ["--report", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--report", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["summary"]["num_calls"] == 6


def test_cli_baseline_csv(tmp_path):
    assert main(["run", "--mode", "baseline", "--agents", "2", "--calls-per-agent", "1",
                 "--report", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().startswith(",".join(CSV_COLUMNS))


def test_cli_sweep_and_ablate(capsys, tmp_path):
    config = tmp_path / "kernel.yaml"
    config.write_text("scheduler.time_slice: 8\n", encoding="utf-8")
    assert main(["sweep", "--counts", "1,2,3", "--calls-per-agent", "1"]) == 0
    out = capsys.readouterr().out
    assert "R^2" in out
    assert main(["ablate", "--config", str(config), "--agents", "2", "--calls-per-agent", "1"]) == 0
    assert "baseline / fifo" in capsys.readouterr().out


def test_cli_reports_bad_config(tmp_path):
    config = tmp_path / "bad.yaml"
    config.write_text("scheduler.strategy: lifo\n", encoding="utf-8")
    assert main(["run", "--config", str(config), "--agents", "1"]) == 1
