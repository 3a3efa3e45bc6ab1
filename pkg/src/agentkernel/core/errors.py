"""
Kernel error hierarchy

Every error carries the stage (kernel module) that raised it so failed
responses can report where a query broke down.
"""

from typing import Any, Optional


class KernelError(Exception):
    """Base class for all kernel errors"""

    stage = "kernel"

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if stage is not None:
            self.stage = stage

    def to_dict(self) -> dict[str, Any]:
        """Structured form used in failed responses"""
        return {
            "stage": self.stage,
            "type": type(self).__name__,
            "message": self.message,
        }


class RejectionError(KernelError):
    """Unknown agent, stopped kernel or agent limit reached"""
    stage = "kernel"


class TransitionError(KernelError):
    """Illegal syscall lifecycle transition"""
    stage = "syscall"


class CompletionError(KernelError):
    """Double completion or completion of a call that is not executing"""
    stage = "syscall"


class SchedulerStateError(KernelError):
    """Scheduler started twice or stopped while not running"""
    stage = "scheduler"


class CapacityExceeded(KernelError):
    """No free core slot; models the out-of-memory failure of unscheduled access"""
    stage = "llm"

    def __init__(self, message: str, retry_at: Any = None):
        super().__init__(message)
        self.retry_at = retry_at


class ContextError(KernelError):
    """Snapshot missing, stale or not produced for this prompt"""
    stage = "context"


class ToolCallParseError(KernelError):
    """A bracketed tool-call region exists but does not follow the grammar"""
    stage = "llm"


class ValidationError(KernelError):
    """Invalid tool schema, tool parameter or query field"""
    stage = "validation"

    def __init__(self, message: str, param: Optional[str] = None, stage: Optional[str] = None):
        super().__init__(message, stage)
        self.param = param

    def to_dict(self) -> dict[str, Any]:
        data = super().to_dict()
        if self.param is not None:
            data["param"] = self.param
        return data


class ToolNotFoundError(KernelError):
    stage = "tool"


class DuplicateToolError(KernelError):
    stage = "tool"


class ToolExecutionError(KernelError):
    stage = "tool"


class OversizeError(KernelError):
    """Record cannot fit in a memory block even on its own"""
    stage = "memory"


class NotFoundError(KernelError):
    """Record or collection absent"""
    stage = "storage"


class StorageCorruptionError(KernelError):
    """Record file exists but cannot be decoded"""
    stage = "storage"


class AccessDeniedError(KernelError):
    stage = "access"


class ConfigError(KernelError):
    """Configuration validation failure naming the offending dotted key"""
    stage = "config"

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class FitError(KernelError):
    stage = "bench"


class HarnessError(KernelError):
    stage = "bench"
