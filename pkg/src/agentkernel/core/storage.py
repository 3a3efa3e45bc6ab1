"""
Storage manager for agentkernel

Persists records as one compressed file each under a root directory and
keeps a per-collection vector index for semantic retrieval. The index is
not written to disk; it is rebuilt from the record files on open.
"""

import hashlib
import json
import os
import re
import tempfile
import threading
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..sdk.types import ResourceOperation, Response
from ..utils.logger import get_logger
from .codec import pack, unpack
from .errors import KernelError, NotFoundError, StorageCorruptionError, ValidationError


logger = get_logger("agentkernel.storage")

EMBED_DIM = 256
RECORD_SUFFIX = ".dat"
_ID_STEM = re.compile(r"^(\d+)_(\d+)$")


def embed(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """
    Deterministic embedding: hashed bag of lowercase whitespace tokens

    Returns:
        L2-normalized vector of length dim (all zeros for empty text)
    """
    vector = np.zeros(dim, dtype=np.float64)
    for token in text.lower().split():
        bucket = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
        vector[bucket % dim] += 1.0
    norm = np.linalg.norm(vector)
    if norm > 0:
        vector /= norm
    return vector


def record_stem(aname: Optional[str] = None, aid: Optional[int] = None,
                rid: Optional[int] = None) -> str:
    """File stem of a record: "{aid}_{rid}" when both ids are given, else aname"""
    if aid is not None and rid is not None:
        return f"{aid}_{rid}"
    if aname:
        return aname
    raise ValidationError("storage operations need aname or both aid and rid", param="aname",
                          stage="storage")


def collection_name(aname: Optional[str] = None, aid: Optional[int] = None,
                    rid: Optional[int] = None) -> str:
    """Vector collection of a record: aname when given, else "{aid}_{rid}" """
    if aname:
        return aname
    return record_stem(aname, aid, rid)


class StorageManager:
    """File-per-record store with a numpy vector index"""

    def __init__(self, root: os.PathLike, dim: int = EMBED_DIM):
        self.root = Path(root)
        self.dim = dim
        self.collections: dict[str, list[tuple[str, np.ndarray]]] = {}
        self._lock = threading.Lock()

        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise KernelError(f"cannot create storage root {self.root}: {e}", stage="storage")
        self._rebuild_index()

    def _path(self, stem: str) -> Path:
        return self.root / f"{stem}{RECORD_SUFFIX}"

    def _rebuild_index(self) -> None:
        """Re-index every record file; id-named records join their agent's collection when it exists"""
        stems = sorted(p.stem for p in self.root.glob(f"*{RECORD_SUFFIX}"))
        for stem in stems:
            match = _ID_STEM.match(stem)
            if match and match.group(1) in stems:
                name = match.group(1)
            else:
                name = stem
            entries = self.collections.setdefault(name, [])
            try:
                text = self._load(stem)
            except StorageCorruptionError as e:
                logger.warning(f"Skipping unreadable record {stem}: {e.message}")
                continue
            if text is not None:
                entries.append((text, embed(text, self.dim)))
        if stems:
            logger.info(f"Indexed {len(stems)} record file(s) under {self.root}")

    def _load(self, stem: str) -> Optional[str]:
        path = self._path(stem)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as e:
            raise KernelError(f"cannot read {path.name}: {e}", stage="storage")
        if not data:
            return None
        return unpack(data)

    def has_collection(self, name: str) -> bool:
        with self._lock:
            return name in self.collections

    def collection_size(self, name: str) -> int:
        with self._lock:
            return len(self.collections.get(name, []))

    def sto_create(self, aname: Optional[str] = None, aid: Optional[int] = None,
                   rid: Optional[int] = None) -> None:
        """Create an empty record file and its collection (idempotent)"""
        stem = record_stem(aname, aid, rid)
        path = self._path(stem)
        try:
            path.touch(exist_ok=True)
        except OSError as e:
            raise KernelError(f"cannot create {path.name}: {e}", stage="storage")
        with self._lock:
            self.collections.setdefault(collection_name(aname, aid, rid), [])

    def sto_write(self, aname: Optional[str], s: str, aid: Optional[int] = None,
                  rid: Optional[int] = None) -> None:
        """Replace the record's content and index the text in its collection"""
        stem = record_stem(aname, aid, rid)
        path = self._path(stem)
        data = pack(s)

        # Write to a sibling temp file and rename so readers never see a partial record
        try:
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{stem}.", suffix=".tmp")
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except OSError as e:
            raise KernelError(f"cannot write {path.name}: {e}", stage="storage")

        with self._lock:
            self.collections.setdefault(collection_name(aname, aid, rid), []).append(
                (s, embed(s, self.dim))
            )
        logger.debug(f"Stored {len(data)} bytes in {path.name}")

    def sto_read(self, aname: Optional[str] = None, aid: Optional[int] = None,
                 rid: Optional[int] = None) -> Optional[str]:
        """
        Read a record

        Returns:
            The stored text, or None when the file is absent or empty

        Raises:
            StorageCorruptionError: file present but undecodable
        """
        return self._load(record_stem(aname, aid, rid))

    def sto_retrieve(self, aname: Optional[str], query: str, aid: Optional[int] = None,
                     rid: Optional[int] = None, k: int = 3) -> list[str]:
        """
        Rank a collection's texts by cosine similarity to the query

        Raises:
            NotFoundError: collection does not exist
        """
        name = collection_name(aname, aid, rid)
        with self._lock:
            if name not in self.collections:
                raise NotFoundError(f"no collection named {name!r}")
            entries = list(self.collections[name])
        if not entries or k <= 0:
            return []

        matrix = np.vstack([vector for _, vector in entries])
        scores = matrix @ embed(query, self.dim)
        order = np.argsort(-scores, kind="stable")[:k]
        return [entries[i][0] for i in order]

    def sto_clear(self, aname: Optional[str] = None, aid: Optional[int] = None,
                  rid: Optional[int] = None) -> None:
        """Delete the record file and drop its collection (idempotent)"""
        stem = record_stem(aname, aid, rid)
        try:
            self._path(stem).unlink(missing_ok=True)
        except OSError as e:
            raise KernelError(f"cannot delete {stem}{RECORD_SUFFIX}: {e}", stage="storage")
        with self._lock:
            self.collections.pop(collection_name(aname, aid, rid), None)
        logger.debug(f"Cleared record {stem}")

    def remove_records(self, prefix: str) -> list[str]:
        """Delete every record file whose stem starts with prefix; returns the stems removed"""
        removed = []
        for path in sorted(self.root.glob(f"{prefix}*{RECORD_SUFFIX}")):
            try:
                path.unlink(missing_ok=True)
            except OSError as e:
                raise KernelError(f"cannot delete {path.name}: {e}", stage="storage")
            removed.append(path.stem)
        return removed

    def address_request(self, call: Any) -> Response:
        """Execute a storage syscall whose request is a ResourceOperation"""
        op: ResourceOperation = call.request
        if not op.name:
            raise ValidationError("storage operations need a record name", param="name", stage="storage")
        owner = op.target_agent if op.target_agent is not None else call.agent_id
        aname = f"{owner}-{op.name}"

        if op.op == "create":
            self.sto_create(aname)
            return Response.success("")
        if op.op == "write":
            self.sto_write(aname, op.content)
            return Response.success(op.content)
        if op.op == "read":
            text = self.sto_read(aname)
            if text is None:
                raise NotFoundError(f"no record named {op.name!r} for agent {owner}")
            return Response.success(text)
        if op.op == "retrieve":
            return Response.success(json.dumps(self.sto_retrieve(aname, op.query, k=op.k), ensure_ascii=False))
        self.sto_clear(aname)
        return Response.success("")
