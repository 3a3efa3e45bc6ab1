"""
Synthetic agent workloads

A WorkloadSpec describes how many agents run, how many queries each
submits, how long prompts and outputs are and which action types they
use. plan_workload turns a spec into concrete queries, deterministically
from the spec seed.
"""

from dataclasses import dataclass
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import HarnessError
from ..core.llm_core import VOCABULARY
from ..sdk.types import ActionType, Query, ResourceOperation
from ..utils.config import ToolSpec


class Uniform(BaseModel):
    kind: Literal["uniform"] = "uniform"
    low: int = Field(ge=1)
    high: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self) -> "Uniform":
        if self.low > self.high:
            raise ValueError("uniform low must not exceed high")
        return self

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))


class Bimodal(BaseModel):
    kind: Literal["bimodal"] = "bimodal"
    short: int = Field(ge=1)
    long: int = Field(ge=1)
    p_long: float = Field(ge=0, le=1)

    def draw(self, rng: np.random.Generator) -> int:
        return self.long if rng.random() < self.p_long else self.short


Length = Union[int, Uniform, Bimodal]


def draw_length(length: Length, rng: np.random.Generator) -> int:
    if isinstance(length, int):
        return length
    return length.draw(rng)


class ActionMix(BaseModel):
    model_config = ConfigDict(extra="forbid")

    chat: float = Field(1.0, ge=0)
    tool_use: float = Field(0.0, ge=0)
    file_operation: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _sums_to_one(self) -> "ActionMix":
        if abs(self.chat + self.tool_use + self.file_operation - 1.0) > 1e-9:
            raise ValueError("action mix fractions must sum to 1")
        return self


class WorkloadSpec(BaseModel):
    """
    Workload of concurrent synthetic agents

    Attributes:
        num_agents: Concurrent agents
        calls_per_agent: Queries each agent submits, one after another
        prompt_tokens: Prompt length (fixed, uniform or bimodal)
        output_tokens: Output length; None lets the core hash it from the prompt
        mix: Fractions of chat, tool_use and file_operation queries
        seed: Seeds both the query plan and the simulated core
    """
    model_config = ConfigDict(extra="forbid")

    num_agents: int = Field(ge=0)
    calls_per_agent: int = Field(1, ge=0)
    prompt_tokens: Length = 40
    output_tokens: Optional[Length] = None
    mix: ActionMix = Field(default_factory=ActionMix)
    seed: int = 0

    def scaled(self, num_agents: int) -> "WorkloadSpec":
        return self.model_copy(update={"num_agents": num_agents})


# Tool registered by the harness when a workload uses tool_use queries
DEMO_TOOL = ToolSpec(
    name="demo/echo",
    schema={"s": {"type": "string", "required": True}},
    max_parallel=1,
    mock="echo",
    cost_model_units=1,
)


@dataclass
class PlannedQuery:
    """One query of an agent's plan"""
    action: ActionType
    query: Query


def _words(rng: np.random.Generator, n: int) -> str:
    return " ".join(VOCABULARY[i] for i in rng.integers(0, len(VOCABULARY), size=n))


def tool_schemas(tools: list[ToolSpec]) -> list[dict[str, Any]]:
    return [
        {
            "name": t.name,
            "parameters": {p: s.model_dump(exclude_none=True) for p, s in sorted(t.schema_.items())},
        }
        for t in tools
    ]


def plan_workload(spec: WorkloadSpec, tools: Optional[list[ToolSpec]] = None) -> list[list[PlannedQuery]]:
    """
    Build every agent's query sequence

    Returns:
        One list of planned queries per agent, in agent order

    Raises:
        HarnessError: tool_use queries requested but no tools given
    """
    tools = tools if tools is not None else [DEMO_TOOL]
    if spec.mix.tool_use > 0 and not tools:
        raise HarnessError("tool_use queries need at least one registered tool")

    actions = [ActionType.CHAT, ActionType.TOOL_USE, ActionType.FILE_OPERATION]
    weights = np.array([spec.mix.chat, spec.mix.tool_use, spec.mix.file_operation], dtype=np.float64)
    schemas = tool_schemas(tools)

    plans = []
    for agent in range(spec.num_agents):
        rng = np.random.default_rng([spec.seed, agent])
        writes = 0
        plan = []
        for i in range(spec.calls_per_agent):
            action = actions[int(rng.choice(len(actions), p=weights))]
            prompt = _words(rng, draw_length(spec.prompt_tokens, rng))
            params: dict[str, Any] = {}
            if spec.output_tokens is not None:
                params = {"max_new_tokens": draw_length(spec.output_tokens, rng), "length_policy": "exact"}

            messages = [{"role": "user", "content": prompt}]
            if action is ActionType.TOOL_USE:
                query = Query(messages=messages, tools=schemas, action_type=action, params=params)
            elif action is ActionType.FILE_OPERATION:
                if writes % 2 == 0:
                    operation = ResourceOperation(op="write", name="notes", content=prompt)
                else:
                    operation = ResourceOperation(op="read", name="notes")
                writes += 1
                query = Query(messages=messages, action_type=action, operation=operation)
            else:
                query = Query(messages=messages, action_type=action, params=params)
            plan.append(PlannedQuery(action, query))
        plans.append(plan)
    return plans
