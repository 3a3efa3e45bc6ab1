#!/usr/bin/env python3
"""
Test the LLM cores: deterministic generation, budgets, tool calling and costs
"""

import json
import sys
from fractions import Fraction
from pathlib import Path
from types import SimpleNamespace

sys.path.insert(0, str(Path(__file__).parent / 'src'))

import pytest
import requests

from agentkernel.core.context import ContextManager
from agentkernel.core.errors import (
    CapacityExceeded,
    ContextError,
    KernelError,
    ToolCallParseError,
    ValidationError,
)
from agentkernel.core.llm_core import (
    DeviceTimeline,
    Generation,
    HttpCore,
    SimulatedCore,
    SuspendedAt,
    TOOL_BLOCK_START,
    VOCABULARY,
    build_core,
    count_tokens,
    stable_hash,
)
from agentkernel.sdk.types import Query
from agentkernel.utils.config import CoreConfig, HttpCoreConfig, SimCoreConfig


PROMPT = [{"role": "user", "content": "book a flight to london"}]
ECHO = {"name": "demo/echo", "parameters": {"s": {"type": "string", "required": True}}}


def _exact(n):
    return {"max_new_tokens": n, "length_policy": "exact"}


def _call(query, call_id=1):
    return SimpleNamespace(call_id=call_id, request=query)


def test_same_seed_same_text():
    a = SimulatedCore(SimCoreConfig(seed=9)).llm_generate(PROMPT)
    b = SimulatedCore(SimCoreConfig(seed=9)).llm_generate(PROMPT)
    assert isinstance(a, Generation)
    assert a.text == b.text
    assert all(word in VOCABULARY for word in a.text.split())


def test_hashed_length_in_range():
    core = SimulatedCore(SimCoreConfig(max_new_tokens=50))
    for i in range(20):
        prompt = [{"role": "user", "content": f"request {i}"}]
        assert 1 <= core.plan(prompt).length <= 50


def test_stable_hash_is_fixed():
    assert stable_hash("a", 1) == stable_hash("a", 1)
    assert stable_hash("a", 1) != stable_hash("a1")


def test_budget_slack_never_suspends():
    result = SimulatedCore().llm_generate(PROMPT, _exact(12), token_budget=12)
    assert isinstance(result, Generation)
    assert result.token_count == 12


def test_budgeted_then_resumed_equals_unbudgeted():
    core = SimulatedCore(SimCoreConfig(seed=4))
    full = core.llm_generate(PROMPT, _exact(25))
    first = core.llm_generate(PROMPT, _exact(25), token_budget=10)
    assert isinstance(first, SuspendedAt)
    assert first.snapshot.tokens_done == 10
    assert first.usage.decode_tokens == 10

    second = core.llm_generate(PROMPT, _exact(25), resume_from=first.snapshot, token_budget=15)
    assert isinstance(second, Generation)
    assert second.text == full.text
    assert second.usage.decode_tokens == 15
    assert second.usage.prefill_tokens == 0


def test_cost_accounting_is_exact():
    core = SimulatedCore(SimCoreConfig(prefill_cost_per_token=0.2, decode_cost_per_token=1.0))
    result = core.llm_generate(PROMPT, _exact(7))
    assert result.usage.model_time == Fraction(1, 5) * count_tokens(PROMPT) + 7
    assert core.service_cost(PROMPT, _exact(7)) == result.usage.model_time


def test_beam_width_three_is_deterministic():
    core = SimulatedCore(SimCoreConfig(beam_width=3))
    a = core.llm_generate(PROMPT, _exact(8))
    b = core.llm_generate(PROMPT, _exact(8))
    assert a.text == b.text
    assert len(a.text.split()) == 8


def test_finish_reason():
    core = SimulatedCore(SimCoreConfig(max_new_tokens=8))
    assert core.llm_generate(PROMPT, _exact(8)).finish_reason == "length"


def test_unknown_generation_parameter():
    with pytest.raises(ValidationError) as excinfo:
        SimulatedCore().llm_generate(PROMPT, {"temperature": 0.5})
    assert excinfo.value.param == "temperature"


def test_tool_prompt_empty_and_single_tool():
    core = SimulatedCore()
    empty = core.tool_calling_input_format(PROMPT, [])
    assert len(empty) == len(PROMPT) + 1
    assert TOOL_BLOCK_START not in empty[-1]["content"]

    formatted = core.tool_calling_input_format(PROMPT, [ECHO])
    block = formatted[-1]
    assert block["role"] == "system"
    assert "demo/echo" in block["content"] and '"s"' in block["content"]


def test_formatting_twice_adds_second_block():
    core = SimulatedCore()
    once = core.tool_calling_input_format(PROMPT, [ECHO])
    twice = core.tool_calling_input_format(once, [ECHO])
    assert len(twice) == len(once) + 1


def test_malformed_tool_schema():
    with pytest.raises(ValidationError):
        SimulatedCore().tool_calling_input_format(PROMPT, [{"name": "noslash"}])
    with pytest.raises(ValidationError):
        SimulatedCore().tool_calling_input_format(
            PROMPT, [{"name": "a/b", "parameters": {"x": {"type": "date"}}}])


def test_parse_tool_calls():
    core = SimulatedCore()
    calls = core.parse_tool_calls('sure [{"name":"demo/echo","parameters":{"s":"hi"}}] done')
    assert len(calls) == 1
    assert calls[0].name == "demo/echo" and calls[0].parameters == {"s": "hi"}
    assert core.parse_tool_calls("plain prose") == []


@pytest.mark.parametrize("text", [
    'step [1] done, now call [{"name":"demo/echo","parameters":{"s":"hi"}}]',
    'see [notes] and [2, 3] then [{"name":"demo/echo","parameters":{"s":"hi"}}] [{"name":"x/y"}]',
    '[{"name":"a/b", [{"name":"demo/echo","parameters":{"s":"hi"}}]',
])
def test_parse_tool_calls_skips_prose_brackets(text):
    calls = SimulatedCore().parse_tool_calls(text)
    assert [(c.name, c.parameters) for c in calls] == [("demo/echo", {"s": "hi"})]


@pytest.mark.parametrize("text", [
    '[{"name":"noslash","parameters":{}}]',
    '[{"name":"a/b","parameters":{}, "extra": 1}]',
    '[{"name":"a/b"',
    '[1, 2]',
    'step [1] done, no call here',
])
def test_parse_tool_calls_errors(text):
    with pytest.raises(ToolCallParseError):
        SimulatedCore().parse_tool_calls(text)


def test_tool_use_generation_ends_in_tool_call():
    core = SimulatedCore(SimCoreConfig(seed=2))
    query = Query(messages=PROMPT, tools=[ECHO], action_type="tool_use", params=_exact(6))
    outcome = core.address_request(_call(query))
    assert outcome.response.ok
    assert len(outcome.response.tool_calls) == 1
    call = outcome.response.tool_calls[0]
    assert call.name == "demo/echo"
    assert call.parameters["s"] in VOCABULARY


def test_tool_call_respects_pattern_and_types():
    tool = {"name": "travel/search", "parameters": {
        "city": {"type": "string", "required": True, "pattern": "^(paris|london|berlin)$"},
        "nights": {"type": "integer", "required": True},
    }}
    core = SimulatedCore()
    query = Query(messages=PROMPT, tools=[tool], action_type="tool_use", params=_exact(4))
    call = core.address_request(_call(query)).response.tool_calls[0]
    assert call.parameters["city"] in ("paris", "london", "berlin")
    assert isinstance(call.parameters["nights"], int)


def test_chat_has_no_tool_calls():
    query = Query(messages=PROMPT, params=_exact(5))
    outcome = SimulatedCore().address_request(_call(query))
    assert outcome.response.ok and outcome.response.tool_calls is None


def test_address_request_suspends_and_resumes_through_context():
    core = SimulatedCore()
    context = ContextManager()
    query = Query(messages=PROMPT, params=_exact(20))
    call = _call(query, call_id=5)

    first = core.address_request(call, token_budget=8, context=context)
    assert first.suspended and context.check_restore(5)
    second = core.address_request(call, token_budget=8, context=context)
    assert second.suspended and second.restored
    third = core.address_request(call, token_budget=8, context=context)
    assert not third.suspended
    assert not context.check_restore(5)
    assert third.response.response_message == core.address_request(_call(query, 6)).response.response_message


def test_address_request_reports_failures():
    query = Query(messages=PROMPT, params={"bogus": 1})
    outcome = SimulatedCore().address_request(_call(query))
    assert not outcome.response.ok
    assert outcome.response.error["stage"] == "llm"


def test_slots():
    core = SimulatedCore(SimCoreConfig(slots=1))
    core.acquire_slot()
    with pytest.raises(CapacityExceeded):
        core.acquire_slot()
    core.release_slot()
    core.acquire_slot()


def test_device_timeline():
    device = DeviceTimeline(slots=1)
    assert device.admit(Fraction(0), Fraction(10)) == (0, 10)
    with pytest.raises(CapacityExceeded) as excinfo:
        device.admit(Fraction(2), Fraction(5))
    assert excinfo.value.retry_at == 10
    assert device.charge(Fraction(2), Fraction(3)) == 13
    assert device.admit(Fraction(10), Fraction(5)) == (13, 18)


def test_build_core():
    assert isinstance(build_core(CoreConfig()), SimulatedCore)
    with pytest.raises(ValidationError):
        build_core(CoreConfig(kind="http"))


class _Reply:
    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status}")

    def json(self):
        return self.payload


class _Session:
    def __init__(self, reply):
        self.reply = reply
        self.sent = []

    def post(self, url, json, headers, timeout):
        self.sent.append((url, json, headers))
        return self.reply


def test_http_core_posts_chat_completion():
    session = _Session(_Reply({"choices": [{"message": {"content": "hello there"}, "finish_reason": "stop"}]}))
    core = HttpCore(HttpCoreConfig(url="http://localhost:9/v1/chat/completions", model="m", api_key="k"),
                    session=session)
    result = core.llm_generate(PROMPT, {"max_new_tokens": 5})
    assert result.text == "hello there"
    url, body, headers = session.sent[0]
    assert body["max_tokens"] == 5 and body["messages"] == PROMPT
    assert headers["Authorization"] == "Bearer k"
    assert not core.preemptible


def test_http_core_errors():
    core = HttpCore(HttpCoreConfig(url="http://x"), session=_Session(_Reply({}, status=500)))
    with pytest.raises(KernelError):
        core.llm_generate(PROMPT)
    with pytest.raises(ContextError):
        core.llm_generate(PROMPT, resume_from=object())
    bad = HttpCore(HttpCoreConfig(url="http://x"), session=_Session(_Reply({"choices": []})))
    outcome = bad.address_request(_call(Query(messages=PROMPT)))
    assert not outcome.response.ok
    assert json.loads(json.dumps(outcome.response.error))["stage"] == "llm"
