"""
Context manager for agentkernel

Stores the suspended generation state of preempted LLM calls so they can
resume without recomputation. Two snapshot forms are supported:

- text: the decoded text of every live hypothesis
- beam: the full beam state (token sequences with cumulative scores)

Both record prefill progress, so a call preempted before its first token
resumes prefill where it stopped.
"""

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Protocol, Union

from ..utils.logger import get_logger
from .errors import ContextError


logger = get_logger("agentkernel.context")


class SnapshotMode(Enum):
    TEXT = "text"
    BEAM = "beam"


@dataclass(frozen=True)
class BeamState:
    """Live hypotheses of a beam search, best first"""
    step: int
    hypotheses: tuple[tuple[tuple[str, ...], int], ...]

    def __post_init__(self):
        scores = [score for _, score in self.hypotheses]
        if scores != sorted(scores, reverse=True):
            raise ContextError("beam hypotheses must be sorted by score, best first")
        if any(len(tokens) != self.step for tokens, _ in self.hypotheses):
            raise ContextError("every beam hypothesis must have length equal to step")


@dataclass(frozen=True)
class DecodeSnapshot:
    """
    Suspended generation state of one call

    Attributes:
        cid: Context id (the call id)
        mode: text or beam
        prefill_progress: Prompt tokens already prefilled
        emitted: Hypothesis texts (text mode) or BeamState (beam mode)
        tokens_done: Decode steps completed
        run_key: Fingerprint of the prompt and decoding parameters
    """
    cid: int
    mode: SnapshotMode
    prefill_progress: int
    emitted: Union[str, BeamState]
    tokens_done: int
    run_key: str = ""

    def __post_init__(self):
        if self.mode is SnapshotMode.TEXT and not isinstance(self.emitted, str):
            raise ContextError("text snapshots carry decoded text")
        if self.mode is SnapshotMode.BEAM and not isinstance(self.emitted, BeamState):
            raise ContextError("beam snapshots carry a BeamState")


class ResumableCore(Protocol):
    """What the context manager needs from a core to resume a run"""

    def start_run(self, prompt: list[dict[str, Any]], params: Optional[dict[str, Any]] = None,
                  resume_from: Optional[DecodeSnapshot] = None) -> Any: ...


class ContextManager:
    """Lock-guarded snapshot store keyed by context id"""

    def __init__(self, mode: Union[str, SnapshotMode] = SnapshotMode.TEXT):
        self.mode = SnapshotMode(mode)
        self.context_data: dict[int, DecodeSnapshot] = {}
        self.lock = threading.Lock()

    def gen_snapshot(self, cid: int, data: DecodeSnapshot) -> None:
        """Store a snapshot, replacing any earlier one for cid"""
        with self.lock:
            self.context_data[cid] = data

    def gen_restore(self, cid: int) -> Optional[DecodeSnapshot]:
        """Return the stored snapshot without removing it"""
        with self.lock:
            return self.context_data.get(cid)

    def check_restore(self, cid: int) -> bool:
        with self.lock:
            return cid in self.context_data

    def clear_restore(self, cid: int) -> None:
        with self.lock:
            self.context_data.pop(cid, None)

    def __len__(self) -> int:
        with self.lock:
            return len(self.context_data)

    def suspend_generation(self, run: Any, cid: int) -> DecodeSnapshot:
        """
        Capture an in-flight run at its current token boundary and store it

        Args:
            run: A decode run exposing snapshot(cid, mode)
            cid: Context id

        Returns:
            The stored snapshot
        """
        try:
            snapshot = run.snapshot(cid, self.mode)
        except ContextError:
            raise
        except Exception as e:
            raise ContextError(f"snapshot of context {cid} failed: {e}")

        self.gen_snapshot(cid, snapshot)
        logger.debug(
            f"Suspended context {cid} at step {snapshot.tokens_done} "
            f"(prefill {snapshot.prefill_progress}, mode {snapshot.mode.value})"
        )
        return snapshot

    def resume_generation(self, core: ResumableCore, prompt: list[dict[str, Any]], cid: int,
                          params: Optional[dict[str, Any]] = None) -> Any:
        """
        Continue a suspended run from its stored snapshot

        Returns:
            A decode run positioned where the snapshot was taken

        Raises:
            ContextError: no snapshot for cid, or it was taken for another prompt
        """
        snapshot = self.gen_restore(cid)
        if snapshot is None:
            raise ContextError(f"no snapshot stored for context {cid}")
        logger.debug(f"Resuming context {cid} from step {snapshot.tokens_done}")
        return core.start_run(prompt, params, resume_from=snapshot)
