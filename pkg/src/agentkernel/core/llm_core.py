"""
LLM cores for agentkernel

LLMCore is the uniform interface every core implements. SimulatedCore is
a deterministic stand-in for a GPU-hosted model with an explicit cost and
capacity model: output length and content are pure functions of the seed,
the prompt and the decoding parameters, and every run reports the model
time it consumed. HttpCore talks to a chat-completions endpoint.
"""

import hashlib
import json
import re
import threading
import time
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import requests
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from ..sdk.types import ActionType, Query, Response, ToolCall
from ..utils.config import CoreConfig, HttpCoreConfig, SimCoreConfig, as_fraction
from ..utils.logger import get_logger
from .context import BeamState, ContextManager, DecodeSnapshot, SnapshotMode
from .errors import (
    CapacityExceeded,
    ContextError,
    KernelError,
    ToolCallParseError,
    ValidationError,
)


logger = get_logger("agentkernel.llm")

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"

_templates = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=False,
)

TOOL_BLOCK_START = "[[tool-calling]]"
TOOLS_LINE_PREFIX = "Tools: "
PARAM_TYPES = {"string", "integer", "number", "boolean"}

# Output vocabulary of the simulated core; words are unique and contain no whitespace
VOCABULARY = (
    "search", "weather", "in", "paris", "book", "a", "flight", "to", "london",
    "reserve", "hotel", "near", "the", "station", "pay", "invoice", "for",
    "order", "check", "status", "of", "my", "request", "find", "cheap",
    "tickets", "from", "berlin", "compare", "prices", "and", "reviews", "list",
    "open", "restaurants", "tonight", "send", "email", "with", "summary",
    "schedule", "meeting", "at", "noon", "translate", "text", "into", "french",
    "convert", "currency", "rates", "today", "plan", "route", "by", "train",
    "read", "notes", "write", "report", "update", "calendar", "then", "done",
)
VOCAB_SIZE = len(VOCABULARY)
WORD_IDS = {word: i for i, word in enumerate(VOCABULARY)}
TOOL_TOKEN = VOCAB_SIZE
START_TOKEN = -1

ALLOWED_PARAMS = {"max_new_tokens", "length_policy", "beam_width"}


def stable_hash(*parts: Any) -> int:
    """Platform-independent 64-bit hash of the given parts"""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(str(part).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "big")


def count_tokens(prompt: list[dict[str, Any]]) -> int:
    """Prompt length in tokens (whitespace-delimited words of every message)"""
    return sum(len(str(message.get("content", "")).split()) for message in prompt)


def prompt_text(prompt: list[dict[str, Any]]) -> str:
    """Canonical text of a message list, used for hashing"""
    return json.dumps(prompt, sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class Usage:
    """Work performed by one generation segment"""
    prefill_tokens: int = 0
    decode_tokens: int = 0
    model_time: Fraction = Fraction(0)

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            self.prefill_tokens + other.prefill_tokens,
            self.decode_tokens + other.decode_tokens,
            self.model_time + other.model_time,
        )


@dataclass
class Generation:
    """A finished generation"""
    text: str
    token_count: int
    finish_reason: str
    tool_calls: Optional[list[ToolCall]] = None
    usage: Usage = field(default_factory=Usage)


@dataclass
class SuspendedAt:
    """A generation stopped at its token budget"""
    snapshot: DecodeSnapshot
    usage: Usage = field(default_factory=Usage)


@dataclass
class RequestOutcome:
    """Result of addressing one LLM call segment"""
    response: Optional[Response]
    snapshot: Optional[DecodeSnapshot] = None
    usage: Usage = field(default_factory=Usage)
    restored: bool = False

    @property
    def suspended(self) -> bool:
        return self.response is None


def _validate_tool_schema(schema: Any) -> dict[str, Any]:
    if not isinstance(schema, dict) or not isinstance(schema.get("name"), str):
        raise ValidationError("malformed tool schema: missing name", param="tools", stage="llm")
    name = schema["name"]
    if name.count("/") != 1:
        raise ValidationError(f"malformed tool schema: bad name {name!r}", param="tools", stage="llm")
    params = schema.get("parameters", {})
    if not isinstance(params, dict):
        raise ValidationError(f"malformed tool schema for {name}: parameters must be a map",
                              param="tools", stage="llm")
    for pname, spec in params.items():
        if not isinstance(spec, dict) or spec.get("type", "string") not in PARAM_TYPES:
            raise ValidationError(f"malformed tool schema for {name}: parameter {pname!r}",
                                  param=pname, stage="llm")
    return {"name": name, "parameters": params}


class LLMCore(ABC):
    """Uniform interface over LLM instances"""

    # Cores that can stop at a token boundary and resume from a snapshot
    preemptible = False

    def __init__(self, llm_name: str, max_new_tokens: int = 256):
        self.llm_name = llm_name
        self.max_new_tokens = max_new_tokens

    @abstractmethod
    def llm_generate(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None,
                     resume_from: Optional[DecodeSnapshot] = None,
                     token_budget: Optional[int] = None) -> Union[Generation, SuspendedAt]:
        """Generate a response for the prompt"""

    def tool_calling_input_format(self, prompt: list[dict[str, Any]],
                                  tools: list[dict[str, Any]]) -> list[dict[str, Any]]:
        """
        Append the tool-calling system block to a prompt

        The block lists each tool as one compact JSON line and frames the
        expected input and output structure. Formatting twice appends a
        second block.

        Raises:
            ValidationError: a tool schema is malformed
        """
        schemas = [_validate_tool_schema(tool) for tool in tools]
        tools_json = json.dumps(schemas, sort_keys=True, separators=(",", ":"))
        block = _templates.get_template("tool_prompt.j2").render(
            tools_json=tools_json,
            tool_count=len(schemas),
            tools_prefix=TOOLS_LINE_PREFIX,
            block_start=TOOL_BLOCK_START,
        )
        return list(prompt) + [{"role": "system", "content": block}]

    def parse_tool_calls(self, text: str) -> list[ToolCall]:
        """
        Extract the first bracketed array of tool calls from generated text

        Bracketed regions that are not call arrays ("step [1]") are skipped.

        Returns:
            Parsed calls; empty when the text has no bracketed region

        Raises:
            ToolCallParseError: brackets present but none holds a valid call array
        """
        decoder = json.JSONDecoder()
        first_error: Optional[str] = None
        start = text.find("[")
        while start >= 0:
            try:
                payload, _ = decoder.raw_decode(text, start)
                return self._call_array(payload)
            except json.JSONDecodeError as e:
                error = f"unparseable tool-call region at {start}: {e.msg}"
            except ToolCallParseError as e:
                error = f"region at {start}: {e.message}"
            first_error = first_error or error
            start = text.find("[", start + 1)

        if first_error is not None:
            raise ToolCallParseError(first_error)
        return []

    @staticmethod
    def _call_array(payload: Any) -> list[ToolCall]:
        if not isinstance(payload, list):
            raise ToolCallParseError("tool-call region is not an array")
        calls = []
        for item in payload:
            if not isinstance(item, dict) or set(item) - {"name", "parameters"}:
                raise ToolCallParseError(f"tool call must be {{name, parameters}}: {item!r}")
            try:
                calls.append(ToolCall.model_validate(item))
            except Exception as e:
                raise ToolCallParseError(f"invalid tool call {item!r}: {e}")
        return calls

    def prepare_prompt(self, query: Query) -> list[dict[str, Any]]:
        """Messages sent to the model for a query (formatted exactly once)"""
        if query.action_type is ActionType.TOOL_USE:
            return self.tool_calling_input_format(query.messages, query.tools)
        return list(query.messages)

    def address_request(self, call: Any, token_budget: Optional[int] = None,
                        context: Optional[ContextManager] = None,
                        prefill_budget: Optional[int] = None) -> RequestOutcome:
        """
        Process one segment of an LLM call

        Args:
            call: SysCall whose request is a Query
            token_budget: Decode tokens allowed in this segment (None = run to the end)
            context: Context manager holding the call's snapshot, if any
            prefill_budget: Prompt tokens allowed in this segment (None = all)

        Returns:
            A response when the call finished (ok or failed), otherwise the snapshot
        """
        query: Query = call.request
        try:
            prompt = self.prepare_prompt(query)
            result = self.llm_generate(prompt, query.params, token_budget=token_budget)
            return self._finish(query, result)
        except KernelError as e:
            logger.warning(f"LLM call {call.call_id} failed: {e.message}")
            return RequestOutcome(Response.failure(e))

    def _finish(self, query: Query, generation: Generation, restored: bool = False) -> RequestOutcome:
        tool_calls = None
        if query.action_type is ActionType.TOOL_USE:
            tool_calls = self.parse_tool_calls(generation.text)
        return RequestOutcome(
            Response.success(generation.text, tool_calls),
            usage=generation.usage,
            restored=restored,
        )


@dataclass(frozen=True)
class RunPlan:
    """Everything that determines a simulated generation"""
    run_key: str
    prompt_tokens: int
    length: int
    beam_width: int
    max_new_tokens: int
    tool_text: Optional[str] = None

    @property
    def base(self) -> bytes:
        return bytes.fromhex(self.run_key)


class DecodeRun:
    """
    One in-flight simulated generation

    Advances prefill then decode one token at a time; can be snapshotted at
    any token boundary and rebuilt from the snapshot.
    """

    def __init__(self, core: "SimulatedCore", plan: RunPlan):
        self.core = core
        self.plan = plan
        self.prefill_done = 0
        self.step = 0
        self.hypotheses: list[tuple[tuple[int, ...], int]] = [((), 0)]

    @property
    def finished(self) -> bool:
        return self.prefill_done >= self.plan.prompt_tokens and self.step >= self.plan.length

    def _logits(self, step: int, prev: int) -> bytes:
        seed = self.plan.base + step.to_bytes(4, "big") + (prev + 1).to_bytes(2, "big")
        return hashlib.blake2b(seed, digest_size=VOCAB_SIZE).digest()

    def _decode_step(self) -> None:
        if self.step == self.plan.length - 1 and self.plan.tool_text is not None:
            self.hypotheses = [(tokens + (TOOL_TOKEN,), score) for tokens, score in self.hypotheses]
            self.step += 1
            return

        width = self.plan.beam_width
        if width == 1:
            tokens, score = self.hypotheses[0]
            logits = self._logits(self.step, tokens[-1] if tokens else START_TOKEN)
            best = max(range(VOCAB_SIZE), key=logits.__getitem__)
            self.hypotheses = [(tokens + (best,), score + logits[best])]
        else:
            candidates = []
            for tokens, score in self.hypotheses:
                logits = self._logits(self.step, tokens[-1] if tokens else START_TOKEN)
                for token in range(VOCAB_SIZE):
                    candidates.append((score + logits[token], tokens + (token,)))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            self.hypotheses = [(tokens, score) for score, tokens in candidates[:width]]
        self.step += 1

    def advance(self, token_budget: Optional[int] = None,
                prefill_budget: Optional[int] = None) -> Usage:
        """
        Run prefill and decode until finished or out of budget

        Returns:
            Work done in this call
        """
        with self.core._active_generation():
            prefilled = 0
            remaining = self.plan.prompt_tokens - self.prefill_done
            if remaining > 0:
                prefilled = remaining if prefill_budget is None else min(remaining, prefill_budget)
                self.prefill_done += prefilled

            decoded = 0
            if self.prefill_done >= self.plan.prompt_tokens:
                while self.step < self.plan.length and (token_budget is None or decoded < token_budget):
                    self._decode_step()
                    decoded += 1

        return Usage(prefilled, decoded, self.core.segment_cost(prefilled, decoded))

    def _word(self, token: int) -> str:
        return self.plan.tool_text if token == TOOL_TOKEN else VOCABULARY[token]

    def text_of(self, tokens: tuple[int, ...]) -> str:
        return " ".join(self._word(t) for t in tokens)

    def snapshot(self, cid: int, mode: Union[str, SnapshotMode] = SnapshotMode.TEXT) -> DecodeSnapshot:
        """Capture the run at its current token boundary"""
        mode = SnapshotMode(mode)
        if mode is SnapshotMode.TEXT:
            emitted: Union[str, BeamState] = "\n".join(self.text_of(tokens) for tokens, _ in self.hypotheses)
        else:
            emitted = BeamState(
                step=self.step,
                hypotheses=tuple(
                    (tuple(self._word(t) for t in tokens), score) for tokens, score in self.hypotheses
                ),
            )
        return DecodeSnapshot(
            cid=cid,
            mode=mode,
            prefill_progress=self.prefill_done,
            emitted=emitted,
            tokens_done=self.step,
            run_key=self.plan.run_key,
        )

    def _token_ids(self, words: tuple[str, ...]) -> tuple[int, ...]:
        try:
            return tuple(WORD_IDS[w] for w in words)
        except KeyError as e:
            raise ContextError(f"snapshot contains a token this core never emits: {e}")

    def _rescore(self, tokens: tuple[int, ...]) -> int:
        score, prev = 0, START_TOKEN
        for step, token in enumerate(tokens):
            score += self._logits(step, prev)[token]
            prev = token
        return score

    def restore(self, snapshot: DecodeSnapshot) -> None:
        """
        Position the run where the snapshot was taken

        Raises:
            ContextError: snapshot taken for another prompt or inconsistent
        """
        if snapshot.run_key != self.plan.run_key:
            raise ContextError(f"snapshot of context {snapshot.cid} belongs to a different prompt")
        if snapshot.tokens_done > 0 and snapshot.prefill_progress < self.plan.prompt_tokens:
            raise ContextError("snapshot has decoded tokens before prefill completed")
        if snapshot.tokens_done >= self.plan.length:
            raise ContextError("snapshot of a finished generation cannot be resumed")

        if snapshot.mode is SnapshotMode.BEAM:
            state = snapshot.emitted
            if state.step != snapshot.tokens_done:
                raise ContextError("beam state step does not match tokens_done")
            hypotheses = [(self._token_ids(words), score) for words, score in state.hypotheses]
        else:
            if snapshot.tokens_done == 0:
                hypotheses = [((), 0)]
            else:
                lines = snapshot.emitted.split("\n")
                hypotheses = []
                for line in lines:
                    tokens = self._token_ids(tuple(line.split(" ")))
                    if len(tokens) != snapshot.tokens_done:
                        raise ContextError("text snapshot length does not match tokens_done")
                    hypotheses.append((tokens, self._rescore(tokens)))

        self.prefill_done = snapshot.prefill_progress
        self.step = snapshot.tokens_done
        self.hypotheses = hypotheses

    def result(self) -> Generation:
        tokens, _ = self.hypotheses[0]
        finish_reason = "length" if self.plan.length >= self.plan.max_new_tokens else "stop"
        return Generation(
            text=self.text_of(tokens),
            token_count=len(tokens),
            finish_reason=finish_reason,
        )


class DeviceTimeline:
    """
    Model-time occupancy of the simulated device

    Work runs serially on the device; memory slots hold resident
    generations until their work ends. Used by unscheduled (baseline)
    access, where a full device raises CapacityExceeded.
    """

    def __init__(self, slots: int):
        self.slots = slots
        self.reset()

    def reset(self) -> None:
        self.free_at = Fraction(0)
        self.resident = [Fraction(0)] * self.slots

    def admit(self, at: Fraction, work: Fraction) -> tuple[Fraction, Fraction]:
        """
        Place a generation on the device at model time ``at``

        Returns:
            (start, end) of its work

        Raises:
            CapacityExceeded: every slot is held at ``at``
        """
        for slot, release in enumerate(self.resident):
            if release <= at:
                start = max(at, self.free_at)
                end = start + work
                self.free_at = end
                self.resident[slot] = end
                return start, end
        raise CapacityExceeded(
            f"all {self.slots} slots busy at {float(at):g}",
            retry_at=min(self.resident),
        )

    def charge(self, at: Fraction, work: Fraction) -> Fraction:
        """Queue wasted work (a failed load) on the device; returns when it ends"""
        start = max(at, self.free_at)
        self.free_at = start + work
        return self.free_at


class SimulatedCore(LLMCore):
    """Deterministic core with explicit prefill/decode costs and slot capacity"""

    preemptible = True

    def __init__(self, config: Optional[SimCoreConfig] = None, failed_attempt_waste: float = 1.0):
        config = config or SimCoreConfig()
        super().__init__("simulated", config.max_new_tokens)
        self.config = config
        self.seed = config.seed
        self.slots = config.slots
        self.beam_width = config.beam_width
        self.length_policy = config.length_policy
        self.prefill_cost = as_fraction(config.prefill_cost_per_token)
        self.decode_cost = as_fraction(config.decode_cost_per_token)
        self.failed_attempt_waste = as_fraction(failed_attempt_waste)

        self._slot_lock = threading.Lock()
        self._held_slots = 0
        self._active = 0
        self.peak_active = 0
        self.device = DeviceTimeline(self.slots)

    # -- capacity ---------------------------------------------------------

    def acquire_slot(self) -> None:
        """
        Take a slot for the caller

        Raises:
            CapacityExceeded: all slots are held
        """
        with self._slot_lock:
            if self._held_slots >= self.slots:
                raise CapacityExceeded(f"all {self.slots} slots in use")
            self._held_slots += 1

    def release_slot(self) -> None:
        with self._slot_lock:
            if self._held_slots > 0:
                self._held_slots -= 1

    @contextmanager
    def _active_generation(self) -> Iterator[None]:
        with self._slot_lock:
            self._active += 1
            self.peak_active = max(self.peak_active, self._active)
            active = self._active
        try:
            assert active <= self.slots, f"{active} concurrent generations exceed {self.slots} slots"
            yield
        finally:
            with self._slot_lock:
                self._active -= 1

    # -- planning ---------------------------------------------------------

    def segment_cost(self, prefill_tokens: int, decode_tokens: int) -> Fraction:
        return self.prefill_cost * prefill_tokens + self.decode_cost * decode_tokens

    def _resolve_params(self, params: Optional[dict[str, Any]]) -> tuple[int, str, int]:
        params = params or {}
        unknown = set(params) - ALLOWED_PARAMS
        if unknown:
            raise ValidationError(f"unknown generation parameter(s): {', '.join(sorted(unknown))}",
                                  param=sorted(unknown)[0], stage="llm")
        max_new = int(params.get("max_new_tokens", self.max_new_tokens))
        policy = params.get("length_policy", self.length_policy)
        width = int(params.get("beam_width", self.beam_width))
        if max_new < 1 or width < 1 or policy not in ("hashed", "exact"):
            raise ValidationError("invalid generation parameters", param="params", stage="llm")
        return max_new, policy, width

    def plan(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None) -> RunPlan:
        """Deterministic length, fingerprint and tool call of a generation"""
        max_new, policy, width = self._resolve_params(params)
        text = prompt_text(prompt)
        length = max_new if policy == "exact" else 1 + stable_hash(self.seed, text) % max_new
        run_key = hashlib.blake2b(
            f"{self.seed}\x1f{text}\x1f{width}\x1f{length}\x1f{max_new}".encode("utf-8"),
            digest_size=16,
        ).hexdigest()
        return RunPlan(
            run_key=run_key,
            prompt_tokens=count_tokens(prompt),
            length=length,
            beam_width=width,
            max_new_tokens=max_new,
            tool_text=self._tool_call_text(prompt, run_key),
        )

    def service_cost(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None) -> Fraction:
        """Total model time of an uninterrupted generation"""
        plan = self.plan(prompt, params)
        return self.segment_cost(plan.prompt_tokens, plan.length)

    def prefill_cost_of(self, prompt: list[dict[str, Any]]) -> Fraction:
        return self.prefill_cost * count_tokens(prompt)

    def _declared_tools(self, prompt: list[dict[str, Any]]) -> list[dict[str, Any]]:
        for message in reversed(prompt):
            content = str(message.get("content", ""))
            if message.get("role") != "system" or TOOL_BLOCK_START not in content:
                continue
            for line in content.splitlines():
                if line.startswith(TOOLS_LINE_PREFIX):
                    return json.loads(line[len(TOOLS_LINE_PREFIX):])
        return []

    def _param_value(self, key: str, name: str, spec: dict[str, Any]) -> Any:
        h = stable_hash(key, name)
        kind = spec.get("type", "string")
        if kind == "integer":
            return h % 100
        if kind == "number":
            return (h % 1000) / 10
        if kind == "boolean":
            return bool(h & 1)
        pattern = spec.get("pattern")
        if pattern:
            regex = re.compile(pattern)
            for offset in range(VOCAB_SIZE):
                word = VOCABULARY[(h + offset) % VOCAB_SIZE]
                if regex.fullmatch(word):
                    return word
        return VOCABULARY[h % VOCAB_SIZE]

    def _tool_call_text(self, prompt: list[dict[str, Any]], run_key: str) -> Optional[str]:
        tools = self._declared_tools(prompt)
        if not tools:
            return None
        tool = tools[stable_hash(run_key, "tool") % len(tools)]
        parameters = {}
        for name, spec in sorted(tool.get("parameters", {}).items()):
            if spec.get("required") or stable_hash(run_key, "optional", name) & 1:
                parameters[name] = self._param_value(run_key, name, spec)
        return json.dumps([{"name": tool["name"], "parameters": parameters}],
                          sort_keys=True, separators=(",", ":"))

    # -- generation -------------------------------------------------------

    def start_run(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None,
                  resume_from: Optional[DecodeSnapshot] = None) -> DecodeRun:
        """Open a decode run, optionally positioned at a snapshot"""
        run = DecodeRun(self, self.plan(prompt, params))
        if resume_from is not None:
            run.restore(resume_from)
        return run

    def llm_generate(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None,
                     resume_from: Optional[DecodeSnapshot] = None,
                     token_budget: Optional[int] = None,
                     prefill_budget: Optional[int] = None,
                     cid: int = 0,
                     mode: Union[str, SnapshotMode] = SnapshotMode.TEXT) -> Union[Generation, SuspendedAt]:
        """
        Generate deterministically, stopping at the budget if one is given

        Returns:
            Generation when finished, SuspendedAt with a snapshot otherwise
        """
        run = self.start_run(prompt, params, resume_from)
        usage = run.advance(token_budget, prefill_budget)
        if not run.finished:
            return SuspendedAt(run.snapshot(cid, mode), usage)
        generation = run.result()
        generation.usage = usage
        return generation

    def address_request(self, call: Any, token_budget: Optional[int] = None,
                        context: Optional[ContextManager] = None,
                        prefill_budget: Optional[int] = None) -> RequestOutcome:
        query: Query = call.request
        cid = call.call_id
        restored = False
        try:
            prompt = self.prepare_prompt(query)
            if context is not None and context.check_restore(cid):
                run = context.resume_generation(self, prompt, cid, query.params)
                restored = True
            else:
                run = self.start_run(prompt, query.params)

            usage = run.advance(token_budget, prefill_budget)

            if not run.finished:
                if context is not None:
                    snapshot = context.suspend_generation(run, cid)
                else:
                    snapshot = run.snapshot(cid)
                return RequestOutcome(None, snapshot, usage, restored)

            if context is not None:
                context.clear_restore(cid)
            generation = run.result()
            generation.usage = usage
            return self._finish(query, generation, restored)
        except KernelError as e:
            logger.warning(f"LLM call {cid} failed: {e.message}")
            if context is not None:
                context.clear_restore(cid)
            return RequestOutcome(Response.failure(e), restored=restored)


class HttpCore(LLMCore):
    """
    Core backed by a chat-completions HTTP endpoint

    Not preemptible: each call runs to completion and its model time is
    the measured wall time in seconds.
    """

    def __init__(self, config: HttpCoreConfig, max_new_tokens: int = 256,
                 session: Optional[requests.Session] = None):
        if not config.url:
            raise ValidationError("core.http.url is required for the http core", param="core.http.url")
        super().__init__(config.model or "http", max_new_tokens)
        self.config = config
        self.session = session or requests.Session()

    def llm_generate(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None,
                     resume_from: Optional[DecodeSnapshot] = None,
                     token_budget: Optional[int] = None) -> Union[Generation, SuspendedAt]:
        if resume_from is not None:
            raise ContextError("the http core cannot resume from snapshots")

        params = params or {}
        max_new = int(params.get("max_new_tokens", self.max_new_tokens))
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {"model": self.config.model, "messages": prompt, "max_tokens": max_new}

        started = time.monotonic()
        try:
            reply = self.session.post(self.config.url, json=body, headers=headers,
                                      timeout=self.config.timeout)
            reply.raise_for_status()
            data = reply.json()
            text = data["choices"][0]["message"]["content"] or ""
            finish = data["choices"][0].get("finish_reason") or "stop"
        except (requests.RequestException, KeyError, IndexError, ValueError) as e:
            raise KernelError(f"http core request failed: {e}", stage="llm")
        elapsed = Fraction(time.monotonic() - started).limit_denominator(1_000_000)

        tokens = len(text.split())
        return Generation(
            text=text,
            token_count=tokens,
            finish_reason="length" if finish == "length" else "stop",
            usage=Usage(count_tokens(prompt), tokens, elapsed),
        )


def build_core(config: CoreConfig) -> LLMCore:
    """Construct the core named by the config"""
    if config.kind == "http":
        return HttpCore(config.http, max_new_tokens=config.sim.max_new_tokens)
    return SimulatedCore(config.sim, failed_attempt_waste=config.failed_attempt_waste)
