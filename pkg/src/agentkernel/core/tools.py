"""
Tool manager for agentkernel

Holds the tool registry, instantiates tools by name, post-verifies call
parameters against each tool's schema and enforces per-tool parallel
limits. The tool queue is served by a skip-scan: the earliest queued call
whose tool is under its limit runs next, and blocked calls keep their
positions.
"""

import json
import re
import threading
import time
from fractions import Fraction
from typing import Any, Callable, Optional

from ..sdk.types import Response, ToolCall
from ..utils.config import ToolSpec, as_fraction
from ..utils.logger import get_logger
from .errors import (
    DuplicateToolError,
    KernelError,
    ToolExecutionError,
    ToolNotFoundError,
    ValidationError,
)
from .llm_core import stable_hash


logger = get_logger("agentkernel.tools")

TOOL_NAME_RE = re.compile(r"^[a-z0-9_]+/[a-z0-9_]+$")


def snake_to_camel(s: str) -> str:
    """Convert a snake_case name to CamelCase ("currency_converter" -> "CurrencyConverter")"""
    if not s:
        raise ValidationError("tool name component must not be empty", param="name", stage="tool")
    return "".join(part.title() for part in s.split("_"))


class MockTool:
    """Base of the offline mock tools; busy for the registered cost in model units"""

    def __init__(self, spec: ToolSpec):
        self.spec = spec
        self.options = dict(spec.options)

    def cost(self, params: dict[str, Any]) -> Fraction:
        return as_fraction(self.spec.cost_model_units)

    def run(self, params: dict[str, Any]) -> str:
        raise NotImplementedError


class Echo(MockTool):
    """Returns its single parameter, or all parameters as JSON"""

    def run(self, params: dict[str, Any]) -> str:
        if len(params) == 1:
            return str(next(iter(params.values())))
        return json.dumps(params, sort_keys=True)


class Delay(MockTool):
    """Busy for `units` model units (parameter or option), then reports it"""

    def _units(self, params: dict[str, Any]) -> Fraction:
        units = params.get("units", self.options.get("units", self.spec.cost_model_units))
        return as_fraction(float(units))

    def cost(self, params: dict[str, Any]) -> Fraction:
        return self._units(params)

    def run(self, params: dict[str, Any]) -> str:
        return f"waited {float(self._units(params)):g} units"


class Fail(MockTool):
    """Fails a deterministic fraction `p` (option, default 1.0) of its calls"""

    def run(self, params: dict[str, Any]) -> str:
        p = float(self.options.get("p", 1.0))
        draw = stable_hash(self.spec.name, json.dumps(params, sort_keys=True)) % 1000
        if draw < p * 1000:
            raise ToolExecutionError(f"{self.spec.name} failed")
        return "ok"


class Counter(MockTool):
    """Counts its invocations"""

    def __init__(self, spec: ToolSpec):
        super().__init__(spec)
        self._count = 0
        self._lock = threading.Lock()

    def run(self, params: dict[str, Any]) -> str:
        with self._lock:
            self._count += 1
            return str(self._count)


MOCK_TOOLS: dict[str, type[MockTool]] = {cls.__name__: cls for cls in (Echo, Delay, Fail, Counter)}


def resolve_mock(mock: str) -> type[MockTool]:
    """Find the mock tool class for a snake_case mock name"""
    class_name = snake_to_camel(mock)
    try:
        return MOCK_TOOLS[class_name]
    except KeyError:
        raise ToolNotFoundError(f"no mock tool class {class_name} (from {mock!r})")


def _check_type(kind: str, value: Any) -> bool:
    if isinstance(value, bool):
        return kind == "boolean"
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int)
    if kind == "number":
        return isinstance(value, (int, float))
    return False


def validate_params(reg: ToolSpec, params: dict[str, Any]) -> dict[str, Any]:
    """
    Post-verify call parameters against a tool's schema

    Returns:
        Normalized parameters (numbers as float), keys sorted

    Raises:
        ValidationError: naming the first offending parameter
    """
    unknown = sorted(set(params) - set(reg.schema_))
    if unknown:
        raise ValidationError(f"{reg.name}: unknown parameter {unknown[0]!r}", param=unknown[0],
                              stage="tool")

    normalized: dict[str, Any] = {}
    for name in sorted(reg.schema_):
        spec = reg.schema_[name]
        if name not in params:
            if spec.required:
                raise ValidationError(f"{reg.name}: missing required parameter {name!r}",
                                      param=name, stage="tool")
            continue
        value = params[name]
        if not _check_type(spec.type, value):
            raise ValidationError(
                f"{reg.name}: parameter {name!r} must be {spec.type}, got {type(value).__name__}",
                param=name, stage="tool",
            )
        if spec.pattern is not None and not re.fullmatch(spec.pattern, str(value)):
            raise ValidationError(f"{reg.name}: parameter {name!r} does not match {spec.pattern!r}",
                                  param=name, stage="tool")
        normalized[name] = float(value) if spec.type == "number" else value
    return normalized


class ConflictMap:
    """In-flight counts per tool, bounded by each tool's max_parallel"""

    def __init__(self):
        self.changed = threading.Condition()
        self.running: dict[str, int] = {}
        self.peaks: dict[str, int] = {}

    def try_acquire(self, name: str, limit: Optional[int]) -> bool:
        with self.changed:
            count = self.running.get(name, 0)
            if limit is not None and count >= limit:
                return False
            self.running[name] = count + 1
            self.peaks[name] = max(self.peaks.get(name, 0), count + 1)
            return True

    def acquire(self, name: str, limit: Optional[int]) -> None:
        """Block until the tool is under its limit, then take a place"""
        with self.changed:
            while not self.try_acquire(name, limit):
                self.changed.wait()

    def release(self, name: str) -> None:
        with self.changed:
            count = self.running.get(name, 0)
            if count <= 1:
                self.running.pop(name, None)
            else:
                self.running[name] = count - 1
            self.changed.notify_all()

    def in_flight(self, name: str) -> int:
        with self.changed:
            return self.running.get(name, 0)

    def peak(self, name: str) -> int:
        with self.changed:
            return self.peaks.get(name, 0)


class ToolManager:
    """Registry, parameter verification and conflict-limited execution of tools"""

    def __init__(self, specs: tuple[ToolSpec, ...] = (), wall_time_per_unit: float = 0.0):
        self.registry: dict[str, ToolSpec] = {}
        self.factories: dict[str, Callable[[ToolSpec], MockTool]] = {}
        self.instances: dict[str, MockTool] = {}
        self.wall_time_per_unit = wall_time_per_unit
        self.conflicts = ConflictMap()
        self.pending: list[Any] = []
        self.releases: dict[str, list[Fraction]] = {}
        self._lock = threading.Lock()

        for spec in specs:
            self.register_tool(spec)

    # -- registry ---------------------------------------------------------

    def register_tool(self, reg: ToolSpec, factory: Optional[Callable[[ToolSpec], MockTool]] = None) -> None:
        """
        Register a tool under its "org/name"

        Raises:
            ValidationError: malformed name
            DuplicateToolError: name already registered
        """
        if not TOOL_NAME_RE.match(reg.name):
            raise ValidationError(f"tool name {reg.name!r} must match org/tool_name",
                                  param="name", stage="tool")
        if factory is None:
            factory = resolve_mock(reg.mock)
        with self._lock:
            if reg.name in self.registry:
                raise DuplicateToolError(f"tool {reg.name} is already registered")
            self.registry[reg.name] = reg
            self.factories[reg.name] = factory
        logger.debug(f"Registered tool {reg.name} (max_parallel={reg.max_parallel}, mock={reg.mock})")

    def lookup(self, name: str) -> ToolSpec:
        with self._lock:
            try:
                return self.registry[name]
            except KeyError:
                raise ToolNotFoundError(f"unknown tool {name}")

    def limit_of(self, name: str) -> Optional[int]:
        with self._lock:
            reg = self.registry.get(name)
        return reg.max_parallel if reg is not None else None

    def load_tool(self, name: str) -> MockTool:
        """Instantiate a tool on first use; later calls share the instance"""
        reg = self.lookup(name)
        with self._lock:
            tool = self.instances.get(name)
            if tool is None:
                tool = self.factories[name](reg)
                self.instances[name] = tool
            return tool

    # -- execution --------------------------------------------------------

    def cost_of(self, tool_call: ToolCall) -> Fraction:
        """Model-time cost of a tool call (0 when the tool or its parameters are invalid)"""
        try:
            reg = self.lookup(tool_call.name)
            params = validate_params(reg, tool_call.parameters)
            return self.load_tool(tool_call.name).cost(params)
        except KernelError:
            return Fraction(0)

    def reserve(self, tool_call: ToolCall, at: Fraction) -> tuple[Fraction, Fraction]:
        """
        Book a call on its tool's model-time timeline

        Each tool has max_parallel places; the call takes the one that frees
        first and starts no earlier than ``at``. Calls are booked in the order
        they acquire their conflict place.

        Returns:
            (start, end) in model time
        """
        cost = self.cost_of(tool_call)
        limit = self.limit_of(tool_call.name)
        if limit is None:
            return at, at + cost
        with self._lock:
            releases = self.releases.setdefault(tool_call.name, [Fraction(0)] * limit)
            place = min(range(limit), key=releases.__getitem__)
            start = max(at, releases[place])
            releases[place] = start + cost
        return start, start + cost

    def tool_run(self, call: Any, acquired: bool = False) -> Response:
        """
        Execute a tool syscall whose request is a ToolCall

        Args:
            call: The tool syscall
            acquired: The caller already took the tool's place in the conflict map

        Raises:
            ToolNotFoundError, ValidationError, ToolExecutionError
        """
        tool_call: ToolCall = call.request
        name = tool_call.name
        if not acquired:
            self.conflicts.acquire(name, self.limit_of(name))
        try:
            reg = self.lookup(name)
            params = validate_params(reg, tool_call.parameters)
            tool = self.load_tool(name)
            busy = float(tool.cost(params)) * self.wall_time_per_unit
            if busy > 0:
                time.sleep(busy)
            try:
                output = tool.run(params)
            except KernelError:
                raise
            except Exception as e:
                raise ToolExecutionError(f"{name} raised {type(e).__name__}: {e}")
            logger.debug(f"Tool {name} finished call {call.call_id}")
            return Response.success(output)
        finally:
            self.conflicts.release(name)

    # -- queue ------------------------------------------------------------

    def enqueue(self, call: Any) -> None:
        with self.conflicts.changed:
            self.pending.append(call)
            self.conflicts.changed.notify_all()

    def wake(self) -> None:
        with self.conflicts.changed:
            self.conflicts.changed.notify_all()

    def queued(self) -> int:
        with self.conflicts.changed:
            return len(self.pending)

    def conflict_skip_scan(self, stopping: Optional[threading.Event] = None) -> Optional[Any]:
        """
        Take the earliest queued call whose tool is under its limit

        Takes the call's place in the conflict map. Parks until a release
        or a new arrival when nothing is runnable.

        Returns:
            The selected call, or None once stopping is set and the queue is empty
        """
        with self.conflicts.changed:
            while True:
                for i, call in enumerate(self.pending):
                    name = call.request.name
                    if self.conflicts.try_acquire(name, self.limit_of(name)):
                        return self.pending.pop(i)
                if not self.pending and stopping is not None and stopping.is_set():
                    return None
                self.conflicts.changed.wait()
