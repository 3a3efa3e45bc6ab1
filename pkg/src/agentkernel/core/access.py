"""
Access manager for agentkernel

Handles inter-agent permissions through privilege groups and asks for
confirmation before irreversible operations.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional

from ..utils.config import AccessConfig
from ..utils.logger import get_logger
from .errors import AccessDeniedError, RejectionError


logger = get_logger("agentkernel.access")

# Reads one reply line for a prompt; raises EOFError when the channel is closed
PromptFn = Callable[[str], str]


@dataclass(frozen=True)
class AuditEntry:
    """One recorded access decision"""
    sid: int
    tid: int
    operation: str
    allowed: bool
    consent: Optional[bool] = None


class AccessManager:
    """Privilege groups keyed by target agent, plus the irreversible-operation gate"""

    def __init__(self, config: Optional[AccessConfig] = None,
                 prompt: Optional[PromptFn] = None,
                 is_registered: Optional[Callable[[int], bool]] = None):
        config = config or AccessConfig()
        self.irreversible_ops = set(config.irreversible_ops)
        self.noninteractive_default = config.noninteractive_default == "allow"
        self.interactive = config.interactive
        self.prompt = prompt or input
        self.is_registered = is_registered

        self.groups: dict[int, set[int]] = {}
        self.audit_log: list[AuditEntry] = []
        self._lock = threading.Lock()

    def _audit(self, entry: AuditEntry) -> None:
        with self._lock:
            self.audit_log.append(entry)

    def add_privilege(self, sid: int, tid: int) -> None:
        """
        Let agent sid access agent tid's resources (idempotent)

        Raises:
            RejectionError: either agent is not registered
        """
        if self.is_registered is not None:
            for aid in (sid, tid):
                if not self.is_registered(aid):
                    raise RejectionError(f"unknown agent {aid}", stage="access")
        with self._lock:
            self.groups.setdefault(tid, set()).add(sid)
        logger.debug(f"Agent {sid} added to privilege group of agent {tid}")

    def check_access(self, sid: int, tid: int) -> bool:
        """True when sid is tid or belongs to tid's privilege group"""
        if sid == tid:
            return True
        with self._lock:
            return sid in self.groups.get(tid, ())

    def ask_permission(self, aid: int, operation: str) -> bool:
        """
        Ask for confirmation of an irreversible operation

        Only "yes" (any case, surrounding blanks ignored) confirms. Without
        an interactive channel the configured default applies; a closed
        channel denies.
        """
        if operation not in self.irreversible_ops:
            return True

        if not self.interactive:
            decision = self.noninteractive_default
        else:
            try:
                reply = self.prompt(f"Agent {aid} requests '{operation}', which cannot be undone. Proceed? (yes/no): ")
            except EOFError:
                logger.warning(f"No input channel to confirm {operation} for agent {aid}; denying")
                reply = ""
            decision = reply.strip().lower() == "yes"

        if not decision:
            logger.warning(f"Permission for {operation} denied to agent {aid}")
        return decision

    def authorize(self, sid: int, tid: int, operation: str) -> None:
        """
        Gate one resource operation of sid on tid's resources and audit the decision

        Raises:
            AccessDeniedError: no privilege, or confirmation refused
        """
        allowed = self.check_access(sid, tid)
        consent = None
        if allowed and operation in self.irreversible_ops:
            consent = self.ask_permission(sid, operation)
            allowed = consent
        self._audit(AuditEntry(sid, tid, operation, allowed, consent))

        if not allowed:
            reason = "consent refused" if consent is False else "no privilege"
            raise AccessDeniedError(f"agent {sid} may not {operation} on agent {tid}'s resources ({reason})")
