"""
Scheduler for agentkernel

Keeps one queue per resource module and runs one processor loop per
queue. Every configured core gets its own LLM lane: a pending pool, a
ready deque and a model-time clock, served FIFO or preemptive
round-robin by the lane's loop. Memory and storage loops serve their
queues in order; the tool loop applies the conflict skip-scan and runs
tool bodies on a worker pool.

In lockstep mode a lane picks its next call only when every registered
agent is parked on an LLM call (or has left) and no other lane is busy.
Among lanes with work, the one whose next segment starts earliest in
model time goes first, which turns concurrent submitters into a
deterministic schedule.
"""

import queue
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from ..sdk.types import Response
from ..utils.config import DEFAULT_LLM, SchedulerConfig, as_fraction
from ..utils.logger import get_logger
from .access import AccessManager
from .context import ContextManager
from .errors import KernelError, RejectionError, SchedulerStateError, ValidationError
from .llm_core import LLMCore, SimulatedCore
from .memory import MemoryManager
from .storage import StorageManager
from .syscall import AgentRegistry, LifecycleState, SysCall, SyscallKind
from .tools import ToolManager


logger = get_logger("agentkernel.scheduler")

STOP = None


def order_key(call: SysCall) -> tuple[Fraction, int, int]:
    """Arrival order: creation time, then agent, then the agent's call sequence"""
    return (call.created_time, call.agent_id, call.seq)


@dataclass(frozen=True)
class AccessRequest:
    """Payload of an access syscall"""
    sid: int
    tid: int
    operation: str


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # start, preempt, resume, finish, fail
    agent_id: int
    seq: int
    call_id: int
    time: Fraction
    llm: str = DEFAULT_LLM


class ScheduleTrace:
    """Ordered record of LLM segment boundaries in model time"""

    def __init__(self):
        self.events: list[TraceEvent] = []
        self._lock = threading.Lock()

    def record(self, kind: str, call: SysCall, time: Fraction, llm: str = DEFAULT_LLM) -> None:
        with self._lock:
            self.events.append(TraceEvent(kind, call.agent_id, call.seq, call.call_id, time, llm))

    def __len__(self) -> int:
        with self._lock:
            return len(self.events)

    def segments(self, llm: Optional[str] = None) -> dict[int, list[tuple[Fraction, Fraction]]]:
        """(start, end) of every segment, per call id, in execution order; optionally one core only"""
        opened: dict[int, Fraction] = {}
        result: dict[int, list[tuple[Fraction, Fraction]]] = {}
        with self._lock:
            events = [e for e in self.events if llm is None or e.llm == llm]
        for event in events:
            if event.kind in ("start", "resume"):
                opened[event.call_id] = event.time
            elif event.call_id in opened:
                start = opened.pop(event.call_id)
                result.setdefault(event.call_id, []).append((start, event.time))
        return result

    def finish_order(self) -> list[int]:
        with self._lock:
            return [e.call_id for e in self.events if e.kind in ("finish", "fail")]


class LLMLane:
    """Pending pool, ready deque and model-time clock of one core"""

    def __init__(self, name: str, core: LLMCore, index: int):
        self.name = name
        self.core = core
        self.index = index
        self.pending: list[SysCall] = []
        self.ready: deque[SysCall] = deque()
        self.clock = Fraction(0)
        self.busy = False

    def has_work(self) -> bool:
        return bool(self.pending or self.ready)

    def next_start(self) -> Fraction:
        """Model time at which the lane's next segment would start"""
        if self.ready:
            return self.clock
        return max(self.clock, min(call.created_time for call in self.pending))


@dataclass
class KernelQueues:
    """One queue per resource module; llm queues are pending pools ordered by the strategy"""
    llm_queues: dict[str, list[SysCall]] = field(default_factory=dict)
    memory_queue: "queue.Queue[Optional[SysCall]]" = field(default_factory=queue.Queue)
    storage_queue: "queue.Queue[Optional[SysCall]]" = field(default_factory=queue.Queue)
    tool_queue: list[SysCall] = field(default_factory=list)

    @property
    def llm_queue(self) -> list[SysCall]:
        """Pending pool of the default core"""
        return self.llm_queues[DEFAULT_LLM]


class Scheduler:
    """Centralized dispatcher and processor loops of the kernel"""

    def __init__(self, config: SchedulerConfig, cores: dict[str, LLMCore], context: ContextManager,
                 memory: MemoryManager, storage: StorageManager, tools: ToolManager,
                 access: AccessManager, agents: AgentRegistry, tool_workers: int = 8):
        if DEFAULT_LLM not in cores:
            raise SchedulerStateError(f"no '{DEFAULT_LLM}' core given")
        self.strategy = config.strategy
        self.time_slice = config.time_slice
        self.lockstep = config.lockstep
        self.prefill_chunk = config.prefill_chunk
        self.switch_cost = as_fraction(config.switch_cost)

        names = [DEFAULT_LLM] + [name for name in cores if name != DEFAULT_LLM]
        self.lanes: dict[str, LLMLane] = {
            name: LLMLane(name, cores[name], index) for index, name in enumerate(names)
        }
        self.context = context
        self.memory = memory
        self.storage = storage
        self.tools = tools
        self.access = access
        self.agents = agents
        self.tool_workers = tool_workers

        self.queues = KernelQueues(
            llm_queues={name: lane.pending for name, lane in self.lanes.items()},
            tool_queue=tools.pending,
        )
        self.trace = ScheduleTrace()

        self._cond = threading.Condition()
        self._runnable = 0
        self._running = False
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def core(self) -> LLMCore:
        return self.lanes[DEFAULT_LLM].core

    @property
    def clock(self) -> Fraction:
        """Model-time clock of the default core"""
        return self.lanes[DEFAULT_LLM].clock

    # -- lifecycle --------------------------------------------------------

    @property
    def running(self) -> bool:
        with self._cond:
            return self._running

    def start(self) -> None:
        """
        Spawn one llm loop per core plus the memory, storage and tool loops

        Raises:
            SchedulerStateError: already running
        """
        with self._cond:
            if self._running:
                raise SchedulerStateError("scheduler is already running")
            self._running = True
            self._stopping.clear()

        for lane in self.lanes.values():
            if isinstance(lane.core, SimulatedCore):
                lane.core.acquire_slot()

        llm_loop = self.run_rr_llm_loop if self.strategy == "rr" else self.run_fifo_llm_loop
        targets: dict[str, Callable[[], Any]] = {}
        for name, lane in self.lanes.items():
            label = "llm" if name == DEFAULT_LLM else f"llm-{name}"
            targets[label] = lambda lane=lane: llm_loop(lane)
        targets["memory"] = lambda: self.run_manager_loop(self.queues.memory_queue, self.memory)
        targets["storage"] = lambda: self.run_manager_loop(self.queues.storage_queue, self.storage)
        targets["tool"] = self.run_tool_loop

        self._threads = [
            threading.Thread(target=target, name=f"agentkernel-{name}", daemon=True)
            for name, target in targets.items()
        ]
        for thread in self._threads:
            thread.start()
        logger.info(
            f"Scheduler started ({self.strategy}, time_slice={self.time_slice}, "
            f"lockstep={self.lockstep}, llms={','.join(self.lanes)})"
        )

    def stop(self) -> None:
        """
        Drain every queue, then join the processor loops

        Raises:
            SchedulerStateError: not running
        """
        with self._cond:
            if not self._running:
                raise SchedulerStateError("scheduler is not running")
            self._running = False
            self._stopping.set()
            self.queues.memory_queue.put(STOP)
            self.queues.storage_queue.put(STOP)
            self.tools.wake()
            self._cond.notify_all()

        for thread in self._threads:
            thread.join()
        self._threads = []

        for lane in self.lanes.values():
            if isinstance(lane.core, SimulatedCore):
                lane.core.release_slot()
        clocks = ", ".join(f"{name}={float(lane.clock):g}" for name, lane in self.lanes.items())
        logger.info(f"Scheduler stopped at model time {clocks}")

    # -- lockstep accounting ----------------------------------------------

    def agent_joined(self) -> None:
        with self._cond:
            self._runnable += 1

    def agent_left(self) -> None:
        with self._cond:
            self._runnable -= 1
            self._cond.notify_all()

    # -- dispatch ---------------------------------------------------------

    def lane_for(self, call: SysCall) -> LLMLane:
        """
        Lane of the core an llm call asked for

        Raises:
            ValidationError: the query names an unknown core
        """
        name = getattr(call.request, "llm", None) or DEFAULT_LLM
        try:
            return self.lanes[name]
        except KeyError:
            raise ValidationError(f"unknown llm {name!r}", param="llm", stage="scheduler")

    def dispatch(self, call: SysCall) -> None:
        """
        Route a created call to the queue of its kind

        The running check and the enqueue happen under one lock, so a call
        accepted here is always ahead of the stop sentinels. Access calls
        are executed inline and never queued.

        Raises:
            RejectionError: scheduler not running
            ValidationError: llm call for an unknown core
        """
        with self._cond:
            if not self._running:
                raise RejectionError(f"kernel is not running; call {call.call_id} rejected")
            lane = self.lane_for(call) if call.kind is SyscallKind.LLM else None

            call.set_status(LifecycleState.QUEUED)
            logger.debug(f"Dispatched {call.kind.value} call {call.call_id} (agent {call.agent_id}#{call.seq})")

            if lane is not None:
                if call.tracked:
                    self._runnable -= 1
                lane.pending.append(call)
                self._cond.notify_all()
            elif call.kind is SyscallKind.MEMORY:
                self.queues.memory_queue.put(call)
            elif call.kind is SyscallKind.STORAGE:
                self.queues.storage_queue.put(call)
            elif call.kind is SyscallKind.TOOL:
                self.tools.enqueue(call)

        if call.kind is SyscallKind.ACCESS:
            self._run_access(call)

    def _run_access(self, call: SysCall) -> None:
        request: AccessRequest = call.request
        call.set_status(LifecycleState.EXECUTING)
        try:
            self.access.authorize(request.sid, request.tid, request.operation)
            response = Response.success("granted")
        except KernelError as e:
            response = Response.failure(e)
        self._complete(call, response, call.created_time)

    # -- completion -------------------------------------------------------

    def _complete(self, call: SysCall, response: Response, at: Fraction) -> None:
        if call.start_time is None:
            call.start_time = call.created_time
        end = max(at, call.start_time)
        final = LifecycleState.DONE if response.ok else LifecycleState.FAILED
        if not response.ok:
            logger.warning(f"Call {call.call_id} ({call.kind.value}) failed: {response.error['message']}")

        self.agents.advance(call.agent_id, end)
        if call.kind is SyscallKind.LLM and call.tracked:
            with self._cond:
                self._runnable += 1
                self._cond.notify_all()
        call.complete(response, final, at=end)

    # -- llm loops --------------------------------------------------------

    def _may_select(self, lane: LLMLane) -> bool:
        if lane.busy or not lane.has_work():
            return False
        if not self.lockstep or self._stopping.is_set():
            return True
        if self._runnable > 0 or any(other.busy for other in self.lanes.values()):
            return False
        candidates = [other for other in self.lanes.values() if other.has_work()]
        return min(candidates, key=lambda other: (other.next_start(), other.index)) is lane

    def _next_call(self, lane: LLMLane, select: Callable[[LLMLane], SysCall]) -> Optional[SysCall]:
        """Block until the lane may select, then mark it busy; None once stopping with nothing left"""
        with self._cond:
            while True:
                if not lane.has_work() and self._stopping.is_set():
                    return None
                if self._may_select(lane):
                    lane.busy = True
                    return select(lane)
                self._cond.wait()

    def _release(self, lane: LLMLane, requeue: Optional[SysCall] = None) -> None:
        with self._cond:
            if requeue is not None:
                self._admit(lane)
                lane.ready.append(requeue)
            lane.busy = False
            self._cond.notify_all()

    def _admit(self, lane: LLMLane) -> None:
        """Move pending calls that have arrived by the lane's clock onto its ready deque"""
        arrived = sorted((c for c in lane.pending if c.created_time <= lane.clock), key=order_key)
        for call in arrived:
            lane.pending.remove(call)
        lane.ready.extend(arrived)

    def _select_fifo(self, lane: LLMLane) -> SysCall:
        call = min(lane.pending, key=order_key)
        lane.pending.remove(call)
        return call

    def _select_rr(self, lane: LLMLane) -> SysCall:
        self._admit(lane)
        if not lane.ready:
            earliest = min(lane.pending, key=order_key)
            lane.clock = max(lane.clock, earliest.created_time)
            self._admit(lane)
        return lane.ready.popleft()

    def _run_segment(self, lane: LLMLane, call: SysCall, token_budget: Optional[int],
                     prefill_budget: Optional[int]) -> bool:
        """Run one segment of an llm call; True when the call was preempted"""
        resumed = call.status is LifecycleState.SUSPENDED
        call.set_status(LifecycleState.EXECUTING)
        start = max(lane.clock, call.created_time)
        if call.start_time is None:
            call.start_time = start
        self.trace.record("resume" if resumed else "start", call, start, lane.name)

        try:
            outcome = lane.core.address_request(call, token_budget, self.context, prefill_budget)
        except AssertionError:
            raise
        except Exception as e:
            logger.exception(f"Unexpected error in llm call {call.call_id}")
            self.context.clear_restore(call.call_id)
            self.trace.record("fail", call, start, lane.name)
            self._complete(call, Response.failure(e), start)
            return False

        cost = outcome.usage.model_time
        if outcome.restored:
            cost += self.switch_cost
        end = start + cost
        lane.clock = end

        if outcome.suspended:
            call.set_status(LifecycleState.SUSPENDED)
            self.trace.record("preempt", call, end, lane.name)
            return True

        self.trace.record("finish" if outcome.response.ok else "fail", call, end, lane.name)
        self._complete(call, outcome.response, end)
        return False

    def run_fifo_llm_loop(self, lane: Optional[LLMLane] = None) -> ScheduleTrace:
        """Run each llm call of a lane to completion in arrival order"""
        lane = lane or self.lanes[DEFAULT_LLM]
        while (call := self._next_call(lane, self._select_fifo)) is not None:
            try:
                self._run_segment(lane, call, None, None)
            finally:
                self._release(lane)
        return self.trace

    def run_rr_llm_loop(self, lane: Optional[LLMLane] = None) -> ScheduleTrace:
        """Run a lane's llm calls in time slices, preempting and requeueing unfinished ones"""
        lane = lane or self.lanes[DEFAULT_LLM]
        preemptible = lane.core.preemptible
        budget = self.time_slice if preemptible else None
        prefill_budget = self.prefill_chunk if preemptible else None

        while (call := self._next_call(lane, self._select_rr)) is not None:
            preempted = False
            try:
                preempted = self._run_segment(lane, call, budget, prefill_budget)
            finally:
                self._release(lane, call if preempted else None)
        return self.trace

    # -- manager loops ----------------------------------------------------

    def run_manager_loop(self, q: "queue.Queue[Optional[SysCall]]", manager: Any) -> None:
        """Serve a memory or storage queue one call at a time, in order"""
        while True:
            call = q.get()
            if call is STOP:
                break
            call.set_status(LifecycleState.EXECUTING)
            try:
                response = manager.address_request(call)
            except KernelError as e:
                response = Response.failure(e)
            except Exception as e:
                logger.exception(f"Unexpected error in {call.kind.value} call {call.call_id}")
                response = Response.failure(e)
            self._complete(call, response, call.created_time)

    def _execute_tool(self, call: SysCall, end: Fraction) -> None:
        try:
            response = self.tools.tool_run(call, acquired=True)
        except KernelError as e:
            response = Response.failure(e)
        except Exception as e:
            logger.exception(f"Unexpected error in tool call {call.call_id}")
            response = Response.failure(e)
        self._complete(call, response, end)

    def run_tool_loop(self, workers: Optional[int] = None) -> None:
        """Skip-scan the tool queue and run selected calls on a worker pool"""
        workers = workers or self.tool_workers
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="agentkernel-tool") as pool:
            while True:
                call = self.tools.conflict_skip_scan(self._stopping)
                if call is None:
                    break
                call.set_status(LifecycleState.EXECUTING)
                call.start_time, end = self.tools.reserve(call.request, call.created_time)
                pool.submit(self._execute_tool, call, end)
