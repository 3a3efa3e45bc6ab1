"""
Trial-and-error baseline

Agents call the core directly, with no scheduler. A generation that finds
every slot of the device occupied fails with CapacityExceeded after its
prompt load has been wasted on the device; the agent waits for the
failure, backs off and tries again.

Attempts are serialized through a lockstep gate in (model time, agent id)
order so baseline runs are as deterministic as kernel runs.
"""

import heapq
import threading
from contextlib import contextmanager
from fractions import Fraction
from typing import Any, Iterator, Optional

from ..core.errors import CapacityExceeded, HarnessError, KernelError
from ..core.llm_core import LLMCore, SimulatedCore
from ..core.syscall import LifecycleState, SysCall, SyscallKind
from ..sdk.kernel import Kernel
from ..sdk.types import Response
from ..utils.config import DEFAULT_LLM, KernelConfig, as_fraction
from ..utils.logger import get_logger


logger = get_logger("agentkernel.baseline")


class LockstepGate:
    """
    Grants turns in (time, agent id) order once every active agent is waiting

    Agents busy with anything other than a gate request count as active
    and hold back the next turn until they request one or leave. Each
    waiter parks on its own event, so a turn wakes only the agent it goes to.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._active = 0
        self._waiting: list[tuple[Fraction, int, threading.Event]] = []
        self._holder: Optional[int] = None

    def join(self) -> None:
        with self._lock:
            self._active += 1

    def leave(self) -> None:
        with self._lock:
            self._active -= 1
            self._grant()

    def _grant(self) -> None:
        if self._holder is not None or not self._waiting or len(self._waiting) < self._active:
            return
        _, aid, event = heapq.heappop(self._waiting)
        self._holder = aid
        event.set()

    @contextmanager
    def turn(self, aid: int, time: Fraction) -> Iterator[None]:
        event = threading.Event()
        with self._lock:
            heapq.heappush(self._waiting, (time, aid, event))
            self._grant()
        event.wait()
        try:
            yield
        finally:
            with self._lock:
                self._holder = None
                self._grant()


class BaselineKernel(Kernel):
    """Kernel facade whose syscalls run directly on the submitting agent's thread"""

    def __init__(self, config: KernelConfig, core: Optional[LLMCore] = None):
        super().__init__(config, core=core)
        for name, llm in self.cores.items():
            if not isinstance(llm, SimulatedCore):
                raise HarnessError(f"the baseline needs the simulated core's device model (llm {name!r})")
            llm.device.reset()
        self.device = self.core.device
        self.gate = LockstepGate()
        self.retry_backoff = as_fraction(config.bench.retry_backoff)
        self.retry_limit = config.bench.retry_limit
        self.failed_attempts = 0
        self._running = False

    @property
    def running(self) -> bool:
        return self._running

    def start(self) -> None:
        self._running = True
        logger.info("Baseline started (no scheduler)")

    def stop(self) -> None:
        self._running = False
        logger.info(f"Baseline stopped after {self.failed_attempts} failed attempt(s)")

    def register_agent(self, name: str) -> int:
        aid = self.agents.register(name)
        self.gate.join()
        return aid

    def deregister_agent(self, aid: int) -> None:
        if not self.agents.is_registered(aid):
            return
        self.agents.deregister(aid)
        self.gate.leave()

    def _finish(self, call: SysCall, response: Response, at: Fraction) -> None:
        if call.start_time is None:
            call.start_time = call.created_time
        end = max(at, call.start_time)
        self.agents.advance(call.agent_id, end)
        final = LifecycleState.DONE if response.ok else LifecycleState.FAILED
        call.complete(response, final, at=end)

    def _syscall(self, aid: int, kind: SyscallKind, request: Any) -> SysCall:
        record = self.agents.get(aid)
        call = self.factory.create_syscall(aid, record.name, kind, request)
        with self._calls_lock:
            self.calls.append(call)
        call.set_status(LifecycleState.QUEUED)

        if kind is SyscallKind.LLM:
            self._generate(call)
            return call

        call.set_status(LifecycleState.EXECUTING)
        at = call.created_time
        try:
            if kind is SyscallKind.ACCESS:
                self.access.authorize(request.sid, request.tid, request.operation)
                response = Response.success("granted")
            elif kind is SyscallKind.MEMORY:
                response = self.memory.address_request(call)
            elif kind is SyscallKind.STORAGE:
                response = self.storage.address_request(call)
            else:
                call.start_time, at = self.tools.reserve(request, call.created_time)
                response = self.tools.tool_run(call)
        except KernelError as e:
            response = Response.failure(e)
        self._finish(call, response, at)
        return call

    def _generate(self, call: SysCall) -> None:
        """Attempt the generation until a slot is free at the attempt time"""
        core: SimulatedCore = self.cores[call.request.llm or DEFAULT_LLM]
        device = core.device
        try:
            prompt = core.prepare_prompt(call.request)
            work = core.service_cost(prompt, call.request.params)
        except KernelError as e:
            call.set_status(LifecycleState.EXECUTING)
            self._finish(call, Response.failure(e), call.created_time)
            return
        waste = core.failed_attempt_waste * core.prefill_cost_of(prompt)

        t = call.created_time
        failures = 0
        while True:
            with self.gate.turn(call.agent_id, t):
                try:
                    start, end = device.admit(t, work)
                except CapacityExceeded as e:
                    learned = device.charge(t, waste)
                    error = e
                    self.failed_attempts += 1
                else:
                    call.set_status(LifecycleState.EXECUTING)
                    call.start_time = start
                    outcome = core.address_request(call)

            if call.status is LifecycleState.EXECUTING:
                self._finish(call, outcome.response, end)
                return

            failures += 1
            if self.retry_limit is not None and failures > self.retry_limit:
                call.set_status(LifecycleState.EXECUTING)
                self._finish(call, Response.failure(error), learned)
                return
            retry = learned + self.retry_backoff
            # A failure that costs no time retries once the first slot frees
            t = retry if retry > t else error.retry_at
