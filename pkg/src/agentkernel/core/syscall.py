"""
System calls for agentkernel

A system call is the schedulable unit of agent work. Calls are created on
the caller's thread, handed to the scheduler, mutated only by the
processor loop that owns them, and read back by the caller after the
completion signal fires.
"""

import itertools
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

from ..sdk.types import Response
from ..utils.logger import get_logger
from .errors import CompletionError, RejectionError, TransitionError


logger = get_logger("agentkernel.syscall")


class SyscallKind(Enum):
    """Resource module a call is routed to"""
    LLM = "llm"
    MEMORY = "memory"
    STORAGE = "storage"
    TOOL = "tool"
    ACCESS = "access"


class LifecycleState(Enum):
    """Lifecycle of a system call"""
    CREATED = "created"
    QUEUED = "queued"
    EXECUTING = "executing"
    SUSPENDED = "suspended"
    DONE = "done"
    FAILED = "failed"

    @property
    def is_terminal(self) -> bool:
        return self in (LifecycleState.DONE, LifecycleState.FAILED)


# Legal lifecycle edges; SUSPENDED is further restricted to LLM calls
TRANSITIONS: dict[LifecycleState, frozenset[LifecycleState]] = {
    LifecycleState.CREATED: frozenset({LifecycleState.QUEUED, LifecycleState.FAILED}),
    LifecycleState.QUEUED: frozenset({LifecycleState.EXECUTING, LifecycleState.FAILED}),
    LifecycleState.EXECUTING: frozenset({
        LifecycleState.SUSPENDED, LifecycleState.DONE, LifecycleState.FAILED,
    }),
    LifecycleState.SUSPENDED: frozenset({LifecycleState.EXECUTING, LifecycleState.FAILED}),
    LifecycleState.DONE: frozenset(),
    LifecycleState.FAILED: frozenset(),
}


@dataclass(eq=False)
class SysCall:
    """A schedulable unit of agent work"""
    call_id: int
    agent_id: int
    agent_name: str
    kind: SyscallKind
    request: Any
    seq: int = 0
    priority: int = 0
    time_limit: Optional[Fraction] = None
    created_time: Fraction = Fraction(0)
    start_time: Optional[Fraction] = None
    end_time: Optional[Fraction] = None
    response: Optional[Response] = None
    # Set by the SDK when the submitting agent participates in lockstep dispatch
    tracked: bool = False

    _status: LifecycleState = field(default=LifecycleState.CREATED, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _done: threading.Event = field(default_factory=threading.Event, repr=False)

    def get_status(self) -> LifecycleState:
        with self._lock:
            return self._status

    def set_status(self, status: LifecycleState) -> None:
        """
        Move the call along its lifecycle

        Raises:
            TransitionError: edge not in the lifecycle, or suspension of a non-LLM call
        """
        with self._lock:
            self._transition(status)

    def _transition(self, status: LifecycleState) -> None:
        if status not in TRANSITIONS[self._status]:
            raise TransitionError(
                f"call {self.call_id}: illegal transition {self._status.value} -> {status.value}"
            )
        if status is LifecycleState.SUSPENDED and self.kind is not SyscallKind.LLM:
            raise TransitionError(
                f"call {self.call_id}: only llm calls can be suspended, not {self.kind.value}"
            )
        self._status = status

    @property
    def status(self) -> LifecycleState:
        return self.get_status()

    def set_priority(self, priority: int) -> None:
        self.priority = priority

    def get_priority(self) -> int:
        return self.priority

    def set_id(self, call_id: int) -> None:
        self.call_id = call_id

    def get_id(self) -> int:
        return self.call_id

    def complete(self, response: Response, final: LifecycleState,
                 at: Optional[Fraction] = None) -> None:
        """
        Store the response, stamp end_time and fire the completion signal

        Args:
            response: Result of the call
            final: DONE or FAILED
            at: Model time of completion; defaults to start_time (or created_time)

        Raises:
            CompletionError: call already completed or not executing
        """
        if not final.is_terminal:
            raise CompletionError(f"call {self.call_id}: {final.value} is not a final state")

        with self._lock:
            if self._done.is_set() or self._status.is_terminal:
                raise CompletionError(f"call {self.call_id} completed twice")
            if self._status is not LifecycleState.EXECUTING:
                raise CompletionError(
                    f"call {self.call_id}: cannot complete from {self._status.value}"
                )
            if self.start_time is None:
                self.start_time = self.created_time
            end = at if at is not None else self.start_time
            self.end_time = max(end, self.start_time)
            self.response = response
            self._status = final

        self._done.set()

    def wait(self, timeout: Optional[float] = None) -> Optional[Response]:
        """Block until the call completes; returns its response (None on timeout)"""
        if not self._done.wait(timeout):
            return None
        return self.response

    @property
    def completed(self) -> bool:
        return self._done.is_set()

    @property
    def wait_time(self) -> Optional[Fraction]:
        """Submission-to-completion delay in model time"""
        if self.end_time is None:
            return None
        return self.end_time - self.created_time


@dataclass
class AgentRecord:
    """Kernel-side state of a registered agent"""
    agent_id: int
    name: str
    clock: Fraction = Fraction(0)
    next_seq: int = 0


class AgentRegistry:
    """Issues agent ids, per-agent call sequences and model-time clocks"""

    def __init__(self, max_agents: Optional[int] = None):
        self.max_agents = max_agents
        self._agents: dict[int, AgentRecord] = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def register(self, name: str) -> int:
        """
        Register an agent

        Raises:
            RejectionError: the concurrent agent limit is reached
        """
        with self._lock:
            if self.max_agents is not None and len(self._agents) >= self.max_agents:
                raise RejectionError(
                    f"agent limit of {self.max_agents} concurrent agents reached"
                )
            aid = next(self._ids)
            self._agents[aid] = AgentRecord(aid, name)
        logger.debug(f"Registered agent {aid} ({name})")
        return aid

    def deregister(self, agent_id: int) -> None:
        with self._lock:
            self._agents.pop(agent_id, None)

    def is_registered(self, agent_id: int) -> bool:
        with self._lock:
            return agent_id in self._agents

    def get(self, agent_id: int) -> AgentRecord:
        with self._lock:
            try:
                return self._agents[agent_id]
            except KeyError:
                raise RejectionError(f"unknown agent {agent_id}")

    def __len__(self) -> int:
        with self._lock:
            return len(self._agents)

    def clock(self, agent_id: int) -> Fraction:
        return self.get(agent_id).clock

    def advance(self, agent_id: int, to: Fraction) -> None:
        """Move an agent's clock forward to a completed call's end time"""
        with self._lock:
            record = self._agents.get(agent_id)
            if record is not None and to > record.clock:
                record.clock = to

    def next_seq(self, agent_id: int) -> int:
        with self._lock:
            record = self._agents.get(agent_id)
            if record is None:
                raise RejectionError(f"unknown agent {agent_id}")
            seq = record.next_seq
            record.next_seq += 1
            return seq


class SyscallFactory:
    """Creates system calls with kernel-assigned, strictly increasing ids"""

    def __init__(self, agents: AgentRegistry):
        self.agents = agents
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def create_syscall(self, agent_id: int, agent_name: str, kind: SyscallKind,
                       request: Any) -> SysCall:
        """
        Create a call in state CREATED stamped with the agent's model time

        Raises:
            RejectionError: agent not registered
        """
        record = self.agents.get(agent_id)
        seq = self.agents.next_seq(agent_id)
        with self._lock:
            call_id = next(self._ids)

        call = SysCall(
            call_id=call_id,
            agent_id=agent_id,
            agent_name=agent_name,
            kind=SyscallKind(kind),
            request=request,
            seq=seq,
            created_time=record.clock,
        )
        logger.debug(f"Created {call.kind.value} call {call_id} for agent {agent_id}#{seq}")
        return call
