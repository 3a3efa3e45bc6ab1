"""
Benchmark harness

Runs a workload of concurrent synthetic agents against a kernel (FIFO or
RR) or against the trial-and-error baseline, then derives metrics from
model-time stamps. All runs use a fresh storage root and lockstep
dispatch, so a fixed seed and config always give the same numbers.
"""

import tempfile
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Union

import psutil

from ..core.errors import HarnessError
from ..core.scheduler import ScheduleTrace
from ..sdk.kernel import Kernel
from ..sdk.types import ActionType, Response
from ..utils.config import KernelConfig, build_config, flatten
from ..utils.logger import get_logger
from .baseline import BaselineKernel
from .metrics import Metrics, fit_linear, LinearFit
from .workload import DEMO_TOOL, PlannedQuery, WorkloadSpec, plan_workload


logger = get_logger("agentkernel.harness")

MODES = ("fifo", "rr", "baseline")


@dataclass
class RunResult:
    """Outcome of one harness run"""
    mode: str
    spec: WorkloadSpec
    metrics: Metrics
    trace: Optional[ScheduleTrace] = None
    failed_attempts: int = 0
    wall_seconds: float = 0.0
    responses: dict[int, list[Response]] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepRow:
    num_agents: int
    overall_time: Fraction
    wait_avg: Fraction


def _run_config(spec: WorkloadSpec, base: Optional[Union[KernelConfig, dict[str, Any]]],
                overrides: dict[str, Any], storage_root: str) -> KernelConfig:
    if isinstance(base, KernelConfig):
        data = base.model_dump(by_alias=True)
    else:
        data = dict(base or {})
    flat = flatten(data)
    flat.update({
        "scheduler.lockstep": True,
        "core.sim.seed": spec.seed,
        "storage.root": storage_root,
    })
    flat.update(overrides)
    if spec.mix.tool_use > 0 and not flat.get("tools"):
        flat["tools"] = [DEMO_TOOL.model_dump(by_alias=True)]
    return build_config(flat)


def _agent_body(kernel: Kernel, aid: int, plan: list[PlannedQuery], out: list[Response],
                errors: list[BaseException]) -> None:
    try:
        for item in plan:
            out.append(kernel.submit(aid, item.query))
    except BaseException as e:
        logger.exception(f"Agent {aid} stopped early")
        errors.append(e)
    finally:
        kernel.deregister_agent(aid)


def check_timestamps(calls: list[Any]) -> None:
    """
    Verify created <= start <= end on every completed call

    Raises:
        HarnessError: naming the first call out of order
    """
    for call in calls:
        if not (call.created_time <= call.start_time <= call.end_time):
            raise HarnessError(
                f"call {call.call_id} timestamps out of order: created {call.created_time}, "
                f"start {call.start_time}, end {call.end_time}"
            )


def _drive(kernel: Kernel, spec: WorkloadSpec, mode: str) -> RunResult:
    """Register every agent, run them concurrently, drain and collect metrics"""
    if spec.num_agents > kernel.config.scheduler.max_concurrent_agents:
        raise HarnessError(
            f"{spec.num_agents} agents exceed scheduler.max_concurrent_agents="
            f"{kernel.config.scheduler.max_concurrent_agents}"
        )
    plans = plan_workload(spec, list(kernel.config.tools))
    aids = [kernel.register_agent(f"agent-{i}") for i in range(spec.num_agents)]
    responses: dict[int, list[Response]] = {aid: [] for aid in aids}
    errors: list[BaseException] = []

    started = time.monotonic()
    kernel.start()
    try:
        threads = [
            threading.Thread(target=_agent_body, args=(kernel, aid, plan, responses[aid], errors),
                             name=f"agent-{aid}", daemon=True)
            for aid, plan in zip(aids, plans)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
    finally:
        kernel.stop()
    wall = time.monotonic() - started

    if errors:
        raise HarnessError(f"{len(errors)} agent(s) failed: {errors[0]}")
    unfinished = [c.call_id for c in kernel.calls if not c.completed]
    if unfinished:
        raise HarnessError(f"{len(unfinished)} call(s) unfinished after drain: {unfinished[:5]}")
    check_timestamps(kernel.calls)

    metrics = Metrics.from_calls(kernel.calls)
    rss = psutil.Process().memory_info().rss / (1024 * 1024)
    logger.debug(f"{mode} run: {metrics.num_calls} calls, {wall:.2f}s wall, RSS {rss:.1f} MiB")

    return RunResult(
        mode=mode,
        spec=spec,
        metrics=metrics,
        trace=None if mode == "baseline" else kernel.scheduler.trace,
        failed_attempts=getattr(kernel, "failed_attempts", 0),
        wall_seconds=wall,
        responses=responses,
    )


def run_kernel_mode(spec: WorkloadSpec, strategy: str = "fifo",
                    config: Optional[Union[KernelConfig, dict[str, Any]]] = None,
                    overrides: Optional[dict[str, Any]] = None) -> RunResult:
    """
    Run a workload through the kernel with the given strategy

    Raises:
        HarnessError: an agent failed or a call was left unfinished
    """
    from ..sdk.kernel import bootstrap_kernel

    with tempfile.TemporaryDirectory(prefix="agentkernel-") as root:
        settings = dict(overrides or {})
        settings["scheduler.strategy"] = strategy
        kernel = bootstrap_kernel(_run_config(spec, config, settings, root))
        return _drive(kernel, spec, strategy)


def run_baseline_mode(spec: WorkloadSpec,
                      config: Optional[Union[KernelConfig, dict[str, Any]]] = None,
                      overrides: Optional[dict[str, Any]] = None) -> RunResult:
    """Run a workload with direct core access and retries on CapacityExceeded"""
    with tempfile.TemporaryDirectory(prefix="agentkernel-") as root:
        kernel = BaselineKernel(_run_config(spec, config, dict(overrides or {}), root))
        return _drive(kernel, spec, "baseline")


def run_mode(mode: str, spec: WorkloadSpec,
             config: Optional[Union[KernelConfig, dict[str, Any]]] = None,
             overrides: Optional[dict[str, Any]] = None) -> RunResult:
    if mode == "baseline":
        return run_baseline_mode(spec, config, overrides)
    if mode in ("fifo", "rr"):
        return run_kernel_mode(spec, mode, config, overrides)
    raise HarnessError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


def sweep_agents(spec: WorkloadSpec, counts: list[int], strategy: str = "fifo",
                 config: Optional[Union[KernelConfig, dict[str, Any]]] = None,
                 overrides: Optional[dict[str, Any]] = None) -> list[SweepRow]:
    """Run the workload once per agent count, calls per agent unchanged"""
    if list(counts) != sorted(counts):
        raise HarnessError("sweep counts must be ascending")
    rows = []
    for n in counts:
        result = run_kernel_mode(spec.scaled(n), strategy, config, overrides)
        rows.append(SweepRow(n, result.metrics.overall_time, result.metrics.wait_avg))
        logger.info(f"Sweep N={n}: overall_time={float(result.metrics.overall_time):g}")
    return rows


def fit_sweep(rows: list[SweepRow]) -> LinearFit:
    return fit_linear([(row.num_agents, float(row.overall_time)) for row in rows])


def ablate(spec: WorkloadSpec, config: Optional[Union[KernelConfig, dict[str, Any]]] = None,
           overrides: Optional[dict[str, Any]] = None) -> list[RunResult]:
    """Run the workload without scheduling, with FIFO and with RR"""
    return [
        run_baseline_mode(spec, config, overrides),
        run_kernel_mode(spec, "fifo", config, overrides),
        run_kernel_mode(spec, "rr", config, overrides),
    ]


def response_texts(result: RunResult) -> dict[tuple[int, int], str]:
    """LLM response texts keyed by (agent_id, seq)"""
    return result.metrics.texts("llm")


def action_counts(spec: WorkloadSpec) -> dict[ActionType, int]:
    counts = {action: 0 for action in ActionType}
    for plan in plan_workload(spec):
        for item in plan:
            counts[item.action] += 1
    return counts
