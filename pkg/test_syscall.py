#!/usr/bin/env python3
"""
Test system call lifecycle, agent registry and syscall factory
"""

import sys
import threading
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / 'src'))

import pytest

from agentkernel.core.errors import CompletionError, RejectionError, TransitionError
from agentkernel.core.syscall import (
    AgentRegistry,
    LifecycleState,
    SysCall,
    SyscallFactory,
    SyscallKind,
)
from agentkernel.sdk.types import Query, Response


@pytest.fixture
def factory():
    agents = AgentRegistry()
    agents.register("travel_agent")
    return SyscallFactory(agents)


def _query():
    return Query(messages=[{"role": "user", "content": "hi"}])


def test_create_defaults(factory):
    call = factory.create_syscall(1, "travel_agent", SyscallKind.LLM, _query())
    assert call.status is LifecycleState.CREATED
    assert call.get_priority() == 0
    assert call.kind is SyscallKind.LLM
    assert call.created_time == 0
    assert call.start_time is None and call.end_time is None


def test_ids_strictly_increase_and_seq_is_per_agent(factory):
    factory.agents.register("b")
    first = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    second = factory.create_syscall(1, "a", SyscallKind.MEMORY, None)
    other = factory.create_syscall(2, "b", SyscallKind.LLM, _query())
    assert first.call_id < second.call_id < other.call_id
    assert (first.seq, second.seq, other.seq) == (0, 1, 0)


def test_create_for_unknown_agent_is_rejected(factory):
    with pytest.raises(RejectionError):
        factory.create_syscall(99, "ghost", SyscallKind.LLM, _query())


def test_created_time_follows_agent_clock(factory):
    factory.agents.advance(1, Fraction(7, 2))
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    assert call.created_time == Fraction(7, 2)


def test_legal_and_illegal_transitions(factory):
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    call.set_status(LifecycleState.SUSPENDED)
    call.set_status(LifecycleState.EXECUTING)
    call.complete(Response.success("done"), LifecycleState.DONE)
    with pytest.raises(TransitionError):
        call.set_status(LifecycleState.EXECUTING)


def test_only_llm_calls_suspend(factory):
    call = factory.create_syscall(1, "a", SyscallKind.MEMORY, None)
    with pytest.raises(TransitionError):
        call.set_status(LifecycleState.SUSPENDED)
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    with pytest.raises(TransitionError):
        call.set_status(LifecycleState.SUSPENDED)


def test_priority_and_id_accessors(factory):
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    call.set_priority(5)
    call.set_id(42)
    assert call.get_priority() == 5
    assert call.get_id() == 42


def test_complete_unblocks_waiter(factory):
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    got = []
    waiter = threading.Thread(target=lambda: got.append(call.wait(timeout=5)))
    waiter.start()
    response = Response.success("hello")
    call.complete(response, LifecycleState.DONE, at=Fraction(3))
    waiter.join(timeout=5)
    assert got == [response]
    assert call.end_time == 3
    assert call.wait_time == 3


def test_complete_twice_fails(factory):
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    call.complete(Response.success("x"), LifecycleState.DONE)
    with pytest.raises(CompletionError):
        call.complete(Response.success("x"), LifecycleState.DONE)


def test_complete_failed_sets_status_and_end_time(factory):
    call = factory.create_syscall(1, "a", SyscallKind.STORAGE, None)
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    call.complete(Response.failure(RuntimeError("disk")), LifecycleState.FAILED)
    assert call.status is LifecycleState.FAILED
    assert call.end_time == call.created_time
    assert call.response.error["type"] == "RuntimeError"


def test_complete_requires_executing(factory):
    call = factory.create_syscall(1, "a", SyscallKind.LLM, _query())
    with pytest.raises(CompletionError):
        call.complete(Response.success("x"), LifecycleState.DONE)
    call.set_status(LifecycleState.QUEUED)
    call.set_status(LifecycleState.EXECUTING)
    with pytest.raises(CompletionError):
        call.complete(Response.success("x"), LifecycleState.SUSPENDED)


def test_registry_limit_and_reuse():
    agents = AgentRegistry(max_agents=2)
    first = agents.register("a")
    agents.register("b")
    with pytest.raises(RejectionError):
        agents.register("c")
    agents.deregister(first)
    third = agents.register("c")
    assert third == 3
    assert len(agents) == 2


def test_clock_never_moves_backwards():
    agents = AgentRegistry()
    aid = agents.register("a")
    agents.advance(aid, Fraction(10))
    agents.advance(aid, Fraction(4))
    assert agents.clock(aid) == 10


def test_wait_times_out_without_completion():
    call = SysCall(call_id=1, agent_id=1, agent_name="a", kind=SyscallKind.LLM, request=None)
    assert call.wait(timeout=0.01) is None
    assert call.wait_time is None
