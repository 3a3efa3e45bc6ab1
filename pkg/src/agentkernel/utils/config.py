"""
Kernel configuration

Loads a YAML document whose keys may be written flat and dotted
(``scheduler.strategy: rr``) or nested, applies dotted overrides and
validates the result with pydantic. Validation failures are reported as
ConfigError naming the dotted key.
"""

from fractions import Fraction
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..core.errors import ConfigError
from .logger import get_logger


logger = get_logger("agentkernel.config")


DEFAULT_IRREVERSIBLE_OPS = ["sto_clear", "mem_clear", "privilege_change"]

# Name of the core configured by the ``core`` section
DEFAULT_LLM = "default"


def as_fraction(value: float) -> Fraction:
    """Exact model-time value of a config number (0.2 is exactly one fifth)"""
    return Fraction(str(value))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SchedulerConfig(_Section):
    """Scheduler strategy and limits"""
    strategy: Literal["fifo", "rr"] = "fifo"
    time_slice: int = Field(16, ge=1)
    max_concurrent_agents: int = Field(250, ge=1)
    lockstep: bool = False
    prefill_chunk: Optional[int] = Field(None, ge=1)
    switch_cost: float = Field(0, ge=0)


class SimCoreConfig(_Section):
    """Parameters of the deterministic simulated core"""
    slots: int = Field(1, ge=1)
    prefill_cost_per_token: float = Field(0.2, ge=0)
    decode_cost_per_token: float = Field(1.0, gt=0)
    max_new_tokens: int = Field(256, ge=1)
    beam_width: int = Field(1, ge=1)
    seed: int = 0
    length_policy: Literal["hashed", "exact"] = "hashed"


class HttpCoreConfig(_Section):
    """Chat-completions endpoint for the HTTP core"""
    url: Optional[str] = None
    model: Optional[str] = None
    api_key: Optional[str] = None
    timeout: float = Field(60, gt=0)


class CoreConfig(_Section):
    kind: Literal["simulated", "http"] = "simulated"
    failed_attempt_waste: float = Field(1.0, ge=0, le=1)
    sim: SimCoreConfig = Field(default_factory=SimCoreConfig)
    http: HttpCoreConfig = Field(default_factory=HttpCoreConfig)


class LLMInstance(CoreConfig):
    """An extra named core that queries can route to with ``llm: <name>``"""
    name: str = Field(pattern=r"^[a-z0-9][a-z0-9_\-]*$")


class ContextConfig(_Section):
    mode: Literal["text", "beam"] = "text"


class MemoryConfig(_Section):
    capacity_bytes: int = Field(65536, ge=1)
    threshold: float = Field(0.8, gt=0, le=1)
    eviction_k: int = Field(2, ge=1)
    readmit: bool = False


class StorageConfig(_Section):
    root: str = "./agentkernel_storage"


class ToolParamSpec(_Section):
    type: Literal["string", "integer", "number", "boolean"] = "string"
    required: bool = False
    pattern: Optional[str] = None


class ToolSpec(_Section):
    """One entry of the tool registry file"""
    name: str
    schema_: dict[str, ToolParamSpec] = Field(default_factory=dict, alias="schema")
    max_parallel: int = Field(1, ge=1)
    mock: str = "echo"
    cost_model_units: float = Field(0, ge=0)
    options: dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ToolManagerConfig(_Section):
    workers: int = Field(8, ge=1)
    wall_time_per_unit: float = Field(0.0, ge=0)


class AccessConfig(_Section):
    irreversible_ops: list[str] = Field(default_factory=lambda: list(DEFAULT_IRREVERSIBLE_OPS))
    noninteractive_default: Literal["deny", "allow"] = "deny"
    interactive: bool = False


class SdkConfig(_Section):
    tool_followup: bool = True
    record_history: bool = False


class BenchConfig(_Section):
    retry_backoff: float = Field(1, ge=0)
    retry_limit: Optional[int] = Field(None, ge=0)


class KernelConfig(_Section):
    """Complete kernel configuration"""
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    core: CoreConfig = Field(default_factory=CoreConfig)
    llms: list[LLMInstance] = Field(default_factory=list)
    context: ContextConfig = Field(default_factory=ContextConfig)
    memory: MemoryConfig = Field(default_factory=MemoryConfig)
    storage: StorageConfig = Field(default_factory=StorageConfig)
    tool_manager: ToolManagerConfig = Field(default_factory=ToolManagerConfig)
    tools: list[ToolSpec] = Field(default_factory=list)
    access: AccessConfig = Field(default_factory=AccessConfig)
    sdk: SdkConfig = Field(default_factory=SdkConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)

    @field_validator("tools")
    @classmethod
    def _unique_tool_names(cls, tools: list[ToolSpec]) -> list[ToolSpec]:
        names = [t.name for t in tools]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate tool names: {', '.join(duplicates)}")
        return tools

    @field_validator("llms")
    @classmethod
    def _unique_llm_names(cls, llms: list[LLMInstance]) -> list[LLMInstance]:
        names = [llm.name for llm in llms]
        if DEFAULT_LLM in names:
            raise ValueError(f"'{DEFAULT_LLM}' names the core section and cannot be reused")
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate llm names: {', '.join(duplicates)}")
        return llms


def flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """
    Flatten nested mappings into dotted keys

    Lists are leaves, so ``tools`` stays a list of entries.
    """
    flat: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def unflatten(flat: dict[str, Any]) -> dict[str, Any]:
    """Rebuild nested mappings from dotted keys"""
    nested: dict[str, Any] = {}
    for dotted, value in flat.items():
        parts = dotted.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(dotted, f"'{part}' is both a value and a section")
            node = child
        node[parts[-1]] = value
    return nested


def build_config(data: Optional[dict[str, Any]] = None,
                 overrides: Optional[dict[str, Any]] = None) -> KernelConfig:
    """
    Validate a config mapping

    Args:
        data: Nested or dotted mapping as read from a config file
        overrides: Dotted keys that replace values from data

    Returns:
        Validated KernelConfig

    Raises:
        ConfigError: naming the first invalid key
    """
    flat = flatten(data or {})
    flat.update(overrides or {})

    try:
        return KernelConfig.model_validate(unflatten(flat))
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or "<root>"
        raise ConfigError(key, error["msg"])


def load_config(path: Optional[Path] = None,
                overrides: Optional[dict[str, Any]] = None) -> KernelConfig:
    """
    Load and validate a YAML config file

    Args:
        path: Config file; None uses the defaults
        overrides: Dotted keys applied on top of the file

    Returns:
        Validated KernelConfig
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(str(path), f"cannot read config: {e}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(str(path), "config document must be a mapping")
        data = loaded
        logger.info(f"Loaded config from {path}")

    return build_config(data, overrides)
