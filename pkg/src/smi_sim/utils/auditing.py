# src/smi_sim/utils/auditing.py
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, slots=True)
class AuditEvent:
    at: float
    actor: str
    action: str
    entity_id: str
    summary: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class AuditTrail:
    """In-memory audit log for one simulation run."""

    events: List[AuditEvent] = field(default_factory=list)

    def count(self, action: str) -> int:
        return sum(1 for e in self.events if e.action == action)

    def by_action(self) -> Dict[str, int]:
        totals: Dict[str, int] = {}
        for event in self.events:
            totals[event.action] = totals.get(event.action, 0) + 1
        return totals


def log_audit_event(
    trail: AuditTrail,
    at: float,
    actor: str,
    action: str,
    entity_id: str,
    summary: Optional[str] = None,
    details: Optional[Dict[str, Any]] = None,
    warn: bool = False,
) -> AuditEvent:
    """Appends an audit entry to the trail and mirrors it to the log."""
    event = AuditEvent(
        at=at,
        actor=actor,
        action=action,
        entity_id=str(entity_id),
        summary=summary,
        details=details or {},
    )
    trail.events.append(event)

    message = f"🔎 [{action}] {actor} -> {entity_id} at t={at:.0f}s"
    if summary:
        message += f" | {summary}"
    if warn:
        logger.warning(message)
    else:
        logger.debug(message)
    return event
