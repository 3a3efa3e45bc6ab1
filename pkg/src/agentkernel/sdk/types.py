"""
Query and response envelopes exchanged between agents and the kernel
"""

import re
from enum import Enum
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.errors import KernelError, ValidationError


TOOL_NAME_RE = re.compile(r"^[^/]+/[^/]+$")

Scalar = Union[str, int, float, bool, None]


class ActionType(str, Enum):
    CHAT = "chat"
    TOOL_USE = "tool_use"
    FILE_OPERATION = "file_operation"


ACTION_ALIASES = {
    "chat": ActionType.CHAT,
    "tool_use": ActionType.TOOL_USE,
    "call_tool": ActionType.TOOL_USE,
    "file_operation": ActionType.FILE_OPERATION,
    "operate_file": ActionType.FILE_OPERATION,
}


def normalize_action_type(s: Union[str, ActionType]) -> ActionType:
    """
    Map both accepted spellings of an action type onto the enum

    Raises:
        ValidationError: unknown action type
    """
    if isinstance(s, ActionType):
        return s
    try:
        return ACTION_ALIASES[s]
    except (KeyError, TypeError):
        raise ValidationError(f"unknown action type {s!r}", param="action_type", stage="sdk")


class ToolCall(BaseModel):
    """A tool invocation parsed from generated text"""
    name: str
    parameters: dict[str, Scalar] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _one_slash(cls, name: str) -> str:
        if not TOOL_NAME_RE.match(name):
            raise ValueError(f"tool name {name!r} must look like 'org/tool_name'")
        return name


class ResourceOperation(BaseModel):
    """Storage or memory operation carried by a file_operation query"""
    model_config = ConfigDict(extra="forbid")

    resource: Literal["storage", "memory"] = "storage"
    op: Literal["create", "write", "read", "retrieve", "clear"]
    name: Optional[str] = None
    rid: Optional[int] = None
    content: Optional[str] = None
    query: Optional[str] = None
    k: int = Field(3, ge=1)
    target_agent: Optional[int] = None

    @model_validator(mode="after")
    def _check_fields(self) -> "ResourceOperation":
        if self.resource == "memory":
            if self.op in ("create", "retrieve"):
                raise ValueError(f"memory does not support {self.op}")
            if self.op in ("write", "read") and self.rid is None:
                raise ValueError("memory operations need a rid")
        if self.op == "write" and self.content is None:
            raise ValueError("write needs content")
        if self.op == "retrieve" and self.query is None:
            raise ValueError("retrieve needs a query")
        return self

    @property
    def syscall_name(self) -> str:
        """Kernel operation name (sto_write, mem_clear, ...)"""
        prefix = "sto" if self.resource == "storage" else "mem"
        return f"{prefix}_{self.op}"


class Query(BaseModel):
    """
    Input envelope of an agent request

    Attributes:
        messages: Conversation as role/content dictionaries
        tools: Tool schemas the model may call (tool_use only)
        action_type: chat, tool_use (call_tool) or file_operation (operate_file)
        message_return_type: Only "text" is honoured
        params: Per-request core overrides (max_new_tokens, length_policy, beam_width)
        operation: Resource operation of a file_operation query
        llm: Name of the core to run on; None uses the default core
    """
    messages: list[dict[str, Any]]
    tools: list[dict[str, Any]] = Field(default_factory=list)
    action_type: ActionType = ActionType.CHAT
    message_return_type: str = "text"
    params: dict[str, Any] = Field(default_factory=dict)
    operation: Optional[ResourceOperation] = None
    llm: Optional[str] = None

    @field_validator("action_type", mode="before")
    @classmethod
    def _normalize(cls, value: Any) -> ActionType:
        try:
            return normalize_action_type(value)
        except ValidationError as e:
            raise ValueError(e.message)

    @field_validator("messages")
    @classmethod
    def _non_empty(cls, messages: list[dict[str, Any]]) -> list[dict[str, Any]]:
        if not messages:
            raise ValueError("messages must not be empty")
        for message in messages:
            if not isinstance(message.get("role"), str) or not isinstance(message.get("content"), str):
                raise ValueError("each message needs string 'role' and 'content'")
        return messages

    @model_validator(mode="after")
    def _check_action(self) -> "Query":
        if self.action_type is ActionType.TOOL_USE and not self.tools:
            raise ValueError("tool_use queries must declare tools")
        if self.action_type is ActionType.FILE_OPERATION and self.operation is None:
            raise ValueError("file_operation queries must carry an operation")
        return self


class Response(BaseModel):
    """
    Output envelope returned to agents

    Attributes:
        response_message: Generated or retrieved text
        tool_calls: Tool calls parsed from a tool_use generation
        status: ok or failed
        error: Structured error {stage, type, message} of a failed call
    """
    response_message: Optional[str] = None
    tool_calls: Optional[list[ToolCall]] = None
    status: Literal["ok", "failed"] = "ok"
    error: Optional[dict[str, Any]] = None

    @model_validator(mode="after")
    def _ok_has_payload(self) -> "Response":
        if self.status == "ok" and self.response_message is None and self.tool_calls is None:
            raise ValueError("an ok response needs a message or tool calls")
        return self

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def success(cls, message: Optional[str] = "",
                tool_calls: Optional[list[ToolCall]] = None) -> "Response":
        return cls(response_message=message, tool_calls=tool_calls)

    @classmethod
    def failure(cls, error: Union[KernelError, Exception]) -> "Response":
        if isinstance(error, KernelError):
            detail = error.to_dict()
        else:
            detail = {"stage": "kernel", "type": type(error).__name__, "message": str(error)}
        return cls(status="failed", error=detail)
