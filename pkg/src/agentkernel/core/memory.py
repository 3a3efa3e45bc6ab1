"""
Memory manager for agentkernel

Each agent owns a byte-bounded memory block of compressed records kept in
recency order. When a write pushes the block over its threshold, the K
least-recently-used records are evicted to the storage manager, repeating
until the block is back under the threshold. Reads of evicted records fall
through to storage.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from ..sdk.types import ResourceOperation, Response
from ..utils.config import MemoryConfig, as_fraction
from ..utils.logger import get_logger
from .codec import pack, unpack
from .errors import NotFoundError, OversizeError, ValidationError
from .storage import StorageManager


logger = get_logger("agentkernel.memory")

EvictionListener = Callable[[int, list[int]], None]


@dataclass
class MemoryItem:
    """A resident record"""
    rid: int
    payload: bytes
    last_access: int


@dataclass
class MemoryBlock:
    """Per-agent memory block; records are ordered least-recent first"""
    agent_id: int
    capacity_bytes: int
    threshold: Fraction
    records: "OrderedDict[int, MemoryItem]" = field(default_factory=OrderedDict)
    used_bytes: int = 0

    @property
    def limit(self) -> Fraction:
        return self.threshold * self.capacity_bytes


class MemoryManager:
    """Per-agent memory blocks with K-LRU eviction to storage"""

    def __init__(self, config: MemoryConfig, storage: StorageManager):
        self.capacity_bytes = config.capacity_bytes
        self.threshold = as_fraction(config.threshold)
        self.eviction_k = config.eviction_k
        self.readmit = config.readmit
        self.storage = storage

        self.blocks: dict[int, MemoryBlock] = {}
        self._clock = 0
        self._listeners: list[EvictionListener] = []
        self._lock = threading.RLock()

    def add_eviction_listener(self, listener: EvictionListener) -> None:
        self._listeners.append(listener)

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def mem_alloc(self, aid: int) -> MemoryBlock:
        """Create the agent's block and storage collection (idempotent)"""
        with self._lock:
            block = self.blocks.get(aid)
            if block is None:
                block = MemoryBlock(aid, self.capacity_bytes, self.threshold)
                self.blocks[aid] = block
                self.storage.sto_create(aname=str(aid))
                logger.debug(f"Allocated memory block for agent {aid}")
            return block

    def used_bytes(self, aid: int) -> int:
        with self._lock:
            block = self.blocks.get(aid)
            return block.used_bytes if block is not None else 0

    def resident(self, aid: int) -> list[int]:
        """Resident rids, least-recent first"""
        with self._lock:
            block = self.blocks.get(aid)
            return list(block.records) if block is not None else []

    def mem_write(self, aid: int, rid: int, s: str) -> None:
        """
        Store s under rid, evicting least-recent records while over threshold

        Raises:
            OversizeError: the record alone exceeds the block threshold
        """
        payload = pack(s)
        with self._lock:
            block = self.mem_alloc(aid)
            if len(payload) > block.limit:
                raise OversizeError(
                    f"record {rid} compresses to {len(payload)} bytes, over the "
                    f"{float(block.limit):g}-byte limit of agent {aid}"
                )

            old = block.records.pop(rid, None)
            if old is not None:
                block.used_bytes -= len(old.payload)
            block.records[rid] = MemoryItem(rid, payload, self._tick())
            block.used_bytes += len(payload)

            while block.used_bytes > block.limit:
                victims = [r for r in block.records if r != rid][: self.eviction_k]
                if not victims:
                    break
                self._evict(block, victims)

    def _evict(self, block: MemoryBlock, victims: list[int]) -> None:
        aid = block.agent_id
        for rid in victims:
            item = block.records.pop(rid)
            block.used_bytes -= len(item.payload)
            self.storage.sto_write(str(aid), unpack(item.payload), aid, rid)
        logger.debug(f"Evicted records {victims} of agent {aid} to storage")
        for listener in self._listeners:
            listener(aid, list(victims))

    def mem_read(self, aid: int, rid: int) -> str:
        """
        Read a record from the block, or from storage if it was evicted

        Raises:
            NotFoundError: rid absent in both tiers
        """
        with self._lock:
            block = self.blocks.get(aid)
            if block is not None and rid in block.records:
                item = block.records[rid]
                item.last_access = self._tick()
                block.records.move_to_end(rid)
                return unpack(item.payload)

        text = self.storage.sto_read(str(aid), aid, rid)
        if text is None:
            raise NotFoundError(f"record {rid} of agent {aid} not found", stage="memory")
        if self.readmit:
            self.mem_write(aid, rid, text)
        return text

    def mem_clear(self, aid: int) -> None:
        """Drop the agent's block and every record it evicted to storage"""
        with self._lock:
            self.blocks.pop(aid, None)
            removed = self.storage.remove_records(f"{aid}_")
            self.storage.sto_clear(aname=str(aid))
        logger.debug(f"Cleared memory of agent {aid} ({len(removed)} stored record(s))")

    def address_request(self, call: Any) -> Response:
        """Execute a memory syscall whose request is a ResourceOperation"""
        op: ResourceOperation = call.request
        aid = op.target_agent if op.target_agent is not None else call.agent_id

        if op.op == "write":
            self.mem_write(aid, op.rid, op.content)
            return Response.success(op.content)
        if op.op == "read":
            return Response.success(self.mem_read(aid, op.rid))
        if op.op == "clear":
            self.mem_clear(aid)
            return Response.success("")
        raise ValidationError(f"memory does not support {op.op}", param="op", stage="memory")
