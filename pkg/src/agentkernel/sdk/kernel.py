"""
Kernel facade for agentkernel

bootstrap_kernel builds every manager, the core and the scheduler from a
configuration; the returned Kernel is the only entry point agents use.
Queries are decomposed into system calls, dispatched, and reassembled into
one Response.
"""

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional, Union

import pydantic

from ..core.access import AccessManager, PromptFn
from ..core.context import ContextManager
from ..core.errors import KernelError, RejectionError, ValidationError
from ..core.llm_core import LLMCore, build_core
from ..core.memory import MemoryManager
from ..core.scheduler import AccessRequest, Scheduler
from ..core.storage import StorageManager
from ..core.syscall import AgentRegistry, SysCall, SyscallFactory, SyscallKind
from ..core.tools import ToolManager
from ..utils.config import DEFAULT_LLM, KernelConfig, build_config, load_config
from ..utils.logger import get_logger
from .types import ActionType, Query, ResourceOperation, Response


logger = get_logger("agentkernel.kernel")


class Kernel:
    """Handle to a bootstrapped kernel: start/stop controls and the submit entry point"""

    def __init__(self, config: KernelConfig, core: Optional[LLMCore] = None,
                 prompt: Optional[PromptFn] = None):
        self.config = config
        self.agents = AgentRegistry(config.scheduler.max_concurrent_agents)
        self.factory = SyscallFactory(self.agents)

        self.cores: dict[str, LLMCore] = {DEFAULT_LLM: core or build_core(config.core)}
        for instance in config.llms:
            self.cores[instance.name] = build_core(instance)
        self.core = self.cores[DEFAULT_LLM]
        self.context = ContextManager(config.context.mode)
        self.storage = StorageManager(Path(config.storage.root))
        self.memory = MemoryManager(config.memory, self.storage)
        self.tools = ToolManager(tuple(config.tools), config.tool_manager.wall_time_per_unit)
        self.access = AccessManager(config.access, prompt, self.agents.is_registered)
        self.scheduler = Scheduler(
            config.scheduler, self.cores, self.context, self.memory, self.storage,
            self.tools, self.access, self.agents, tool_workers=config.tool_manager.workers,
        )

        self.calls: list[SysCall] = []
        self._calls_lock = threading.Lock()
        self._history: dict[int, int] = {}
        self._executor: Optional[ThreadPoolExecutor] = None

    # -- lifecycle --------------------------------------------------------

    @property
    def running(self) -> bool:
        return self.scheduler.running

    def start(self) -> None:
        self.scheduler.start()

    def stop(self) -> None:
        self.scheduler.stop()
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "Kernel":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        if self.running:
            self.stop()

    # -- agents -----------------------------------------------------------

    def register_agent(self, name: str) -> int:
        """
        Register an agent and return its kernel-issued id

        Raises:
            RejectionError: agent limit reached
        """
        aid = self.agents.register(name)
        self.scheduler.agent_joined()
        logger.info(f"Agent {aid} ({name}) registered")
        return aid

    def deregister_agent(self, aid: int) -> None:
        if not self.agents.is_registered(aid):
            return
        self.agents.deregister(aid)
        self.scheduler.agent_left()
        logger.debug(f"Agent {aid} deregistered")

    def grant_privilege(self, owner: int, sid: int) -> Response:
        """Let agent sid access owner's resources, subject to confirmation"""
        if not self.access.ask_permission(owner, "privilege_change"):
            return Response.failure(
                KernelError(f"privilege change for agent {owner} was not confirmed", stage="access")
            )
        try:
            self.access.add_privilege(sid, owner)
        except KernelError as e:
            return Response.failure(e)
        return Response.success("granted")

    # -- syscalls ---------------------------------------------------------

    def _syscall(self, aid: int, kind: SyscallKind, request: Any) -> SysCall:
        record = self.agents.get(aid)
        call = self.factory.create_syscall(aid, record.name, kind, request)
        call.tracked = self.scheduler.lockstep
        with self._calls_lock:
            self.calls.append(call)
        self.scheduler.dispatch(call)
        return call

    def _run(self, aid: int, kind: SyscallKind, request: Any) -> Response:
        return self._syscall(aid, kind, request).wait()

    def _query_of(self, query: Union[Query, dict[str, Any]]) -> Query:
        if isinstance(query, Query):
            return query
        try:
            return Query.model_validate(query)
        except pydantic.ValidationError as e:
            error = e.errors()[0]
            param = ".".join(str(part) for part in error["loc"]) or "query"
            raise ValidationError(f"invalid query: {error['msg']}", param=param, stage="sdk")

    def submit(self, aid: int, query: Union[Query, dict[str, Any]]) -> Response:
        """
        Decompose a query into system calls and return the assembled response

        Stage failures come back as a failed Response.

        Raises:
            RejectionError: kernel not started or agent not registered
        """
        if not self.running:
            raise RejectionError("kernel is not running")
        if not self.agents.is_registered(aid):
            raise RejectionError(f"unknown agent {aid}")

        try:
            query = self._query_of(query)
        except ValidationError as e:
            return Response.failure(e)

        if query.llm is not None and query.llm not in self.cores:
            return Response.failure(ValidationError(
                f"unknown llm {query.llm!r}; configured: {', '.join(self.cores)}", param="llm", stage="sdk",
            ))

        if query.action_type is ActionType.FILE_OPERATION:
            return self._file_operation(aid, query.operation)
        if query.action_type is ActionType.TOOL_USE:
            return self._tool_use(aid, query)
        return self._chat(aid, query)

    def submit_async(self, aid: int, query: Union[Query, dict[str, Any]]) -> "Future[Response]":
        """Submit on a kernel worker; the future resolves to the Response"""
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.config.scheduler.max_concurrent_agents,
                thread_name_prefix="agentkernel-submit",
            )
        return self._executor.submit(self.submit, aid, query)

    def _chat(self, aid: int, query: Query) -> Response:
        response = self._run(aid, SyscallKind.LLM, query)
        if response.ok and self.config.sdk.record_history:
            self._record_turn(aid, query, response)
        return response

    def _record_turn(self, aid: int, query: Query, response: Response) -> None:
        rid = self._history.get(aid, 0)
        self._history[aid] = rid + 1
        turn = "\n".join(f"{m['role']}: {m['content']}" for m in query.messages)
        content = f"{turn}\nassistant: {response.response_message}"
        self._run(aid, SyscallKind.MEMORY,
                  ResourceOperation(resource="memory", op="write", rid=rid, content=content))

    def _tool_use(self, aid: int, query: Query) -> Response:
        first = self._run(aid, SyscallKind.LLM, query)
        if not first.ok or not first.tool_calls:
            return first

        calls = [self._syscall(aid, SyscallKind.TOOL, tool_call) for tool_call in first.tool_calls]
        results = [call.wait() for call in calls]
        for result in results:
            if not result.ok:
                return result

        if not self.config.sdk.tool_followup:
            return first

        tool_messages = [
            {"role": "tool", "content": f"{tool_call.name} returned: {result.response_message}"}
            for tool_call, result in zip(first.tool_calls, results)
        ]
        followup = Query(
            messages=list(query.messages)
            + [{"role": "assistant", "content": first.response_message or ""}]
            + tool_messages,
            action_type=ActionType.CHAT,
            params=query.params,
            llm=query.llm,
        )
        final = self._run(aid, SyscallKind.LLM, followup)
        if not final.ok:
            return final
        return Response.success(final.response_message, first.tool_calls)

    def _file_operation(self, aid: int, op: ResourceOperation) -> Response:
        owner = op.target_agent if op.target_agent is not None else aid
        if owner != aid:
            granted = self._run(aid, SyscallKind.ACCESS, AccessRequest(aid, owner, op.syscall_name))
            if not granted.ok:
                return granted
        kind = SyscallKind.MEMORY if op.resource == "memory" else SyscallKind.STORAGE
        return self._run(aid, kind, op)


def bootstrap_kernel(config: Union[KernelConfig, dict[str, Any], str, Path, None] = None,
                     core: Optional[LLMCore] = None,
                     prompt: Optional[PromptFn] = None) -> Kernel:
    """
    Construct a kernel; nothing runs until start()

    Args:
        config: KernelConfig, config mapping, YAML file path, or None for defaults
        core: Core to use instead of the configured one
        prompt: Input function for interactive confirmations

    Raises:
        ConfigError: naming the invalid key
    """
    if isinstance(config, KernelConfig):
        kernel_config = config
    elif isinstance(config, (str, Path)):
        kernel_config = load_config(Path(config))
    else:
        kernel_config = build_config(config)

    kernel = Kernel(kernel_config, core=core, prompt=prompt)
    logger.info(
        f"Kernel bootstrapped: {kernel_config.core.kind} core, {len(kernel_config.llms)} extra llm(s), "
        f"{kernel_config.scheduler.strategy} scheduling, {len(kernel_config.tools)} tool(s)"
    )
    return kernel
