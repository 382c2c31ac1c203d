# src/smi_sim/modules/scheduler/engine.py
"""
Contact scheduling under an SMS quota.

Contacts carry a priority (1..10) and a batch number. Each period the active
list is filled in priority order up to what the quota headroom can pay for,
except that the first slot is reserved for the best contact of the batch
whose turn it is, so every batch starts an epoch at least once per rotation.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from smi_sim.config import (
    BACKOFF_DECREASE,
    BACKOFF_DELAY_THRESHOLD_S,
    BACKOFF_FLOOR,
    BACKOFF_INCREASE,
    BATCH_SIZE,
    PRIORITY_LEVELS,
    QUOTA_OVERRUN_ALLOWANCE,
)
from smi_sim.core.exceptions import QuotaExceededError
from smi_sim.domain.models import PrincipalIdentity
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, slots=True)
class ContactEntry:
    peer: PrincipalIdentity
    priority: int
    batch: int = 0
    interaction_frequency: float = 0.0

    def __post_init__(self):
        if not 1 <= self.priority <= PRIORITY_LEVELS:
            raise ValueError(f"priority must be in 1..{PRIORITY_LEVELS}, got {self.priority}")
        if self.batch < 0:
            raise ValueError("batch must be non-negative")


@dataclass(frozen=True, slots=True)
class QuotaState:
    period_start: int
    period_s: int
    messages_sent: int
    cap: int
    overrun_allowance: float = QUOTA_OVERRUN_ALLOWANCE

    @property
    def hard_cap(self) -> int:
        return int(math.floor(self.cap * (1.0 + self.overrun_allowance)))

    @property
    def headroom(self) -> int:
        return max(0, self.cap - self.messages_sent)


@dataclass(frozen=True, slots=True)
class ActiveEntry:
    contact: ContactEntry
    trusted_boost: bool
    reserved: bool = False


@dataclass(frozen=True, slots=True)
class BackoffState:
    rate: float = 1.0
    floor: float = BACKOFF_FLOOR
    decrease: float = BACKOFF_DECREASE
    increase: float = BACKOFF_INCREASE


def new_quota(cap: int, period_s: int, now: int = 0, overrun_allowance: float = QUOTA_OVERRUN_ALLOWANCE) -> QuotaState:
    period_start = (now // period_s) * period_s
    return QuotaState(period_start, period_s, 0, cap, overrun_allowance)


def roll_quota(quota: QuotaState, now: int) -> QuotaState:
    """Start a fresh period once now has moved past the current one."""
    if now < quota.period_start + quota.period_s:
        return quota
    period_start = (now // quota.period_s) * quota.period_s
    return replace(quota, period_start=period_start, messages_sent=0)


def record_send(quota: QuotaState, messages: int = 1) -> QuotaState:
    """Count sent messages. Overrun past cap is allowed up to the hard cap only."""
    sent = quota.messages_sent + messages
    if sent > quota.hard_cap:
        raise QuotaExceededError(
            f"{sent} messages exceed the hard cap {quota.hard_cap} (cap {quota.cap})"
        )
    return replace(quota, messages_sent=sent)


def can_start_epoch(quota: QuotaState, epoch_cost: int) -> bool:
    return quota.headroom >= epoch_cost


def estimate_epoch_cost(k: int, segments_per_message: int = 3) -> int:
    """SMS segments for three dialing messages, 2k links and the end tag."""
    return (3 + 2 * k + 1) * segments_per_message


def assign_batches(peers: Sequence[PrincipalIdentity], batch_size: int = BATCH_SIZE) -> List[int]:
    """Round-robin batch numbers giving ceil(n / batch_size) disjoint batches."""
    count = max(1, math.ceil(len(peers) / batch_size))
    return [i % count for i in range(len(peers))]


def batch_count(contacts: Sequence[ContactEntry]) -> int:
    if not contacts:
        return 0
    return max(c.batch for c in contacts) + 1


def suggest_priority(interactions_per_day: float) -> int:
    """Map a contact's typical interaction frequency onto 1..10 on a log scale."""
    if interactions_per_day <= 0:
        return 1
    level = 1 + int(math.floor(math.log2(1.0 + interactions_per_day) * 2))
    return max(1, min(PRIORITY_LEVELS, level))


def max_boost_priority(now: int, cycle_s: int) -> int:
    """Highest priority eligible for a trusted-location boost; steps down each cycle."""
    return PRIORITY_LEVELS - (now // cycle_s) % PRIORITY_LEVELS


def build_active_list(
    contacts: Sequence[ContactEntry],
    quota: QuotaState,
    now: int,
    epoch_cost: int,
    priority_cycle_s: int,
    backoff: Optional[BackoffState] = None,
) -> List[ActiveEntry]:
    if not contacts or epoch_cost <= 0:
        return []
    rate = backoff.rate if backoff is not None else 1.0
    capacity = int(math.floor(quota.headroom * rate / epoch_cost))
    if capacity <= 0:
        return []

    ordered = sorted(contacts, key=lambda c: (-c.priority, c.peer.device_id))
    turn = (now // quota.period_s) % batch_count(contacts)
    boost_cap = max_boost_priority(now, priority_cycle_s)

    selected: List[ActiveEntry] = []
    chosen = set()
    reserved = next((c for c in ordered if c.batch == turn), None)
    if reserved is not None:
        selected.append(ActiveEntry(reserved, reserved.priority <= boost_cap, reserved=True))
        chosen.add(reserved.peer.device_id)
    for contact in ordered:
        if len(selected) >= capacity:
            break
        if contact.peer.device_id in chosen:
            continue
        selected.append(ActiveEntry(contact, contact.priority <= boost_cap))
        chosen.add(contact.peer.device_id)
    return selected[:capacity]


def backoff_on_loss(state: BackoffState) -> BackoffState:
    return replace(state, rate=max(state.floor, state.rate * state.decrease))


def backoff_on_clean_period(state: BackoffState) -> BackoffState:
    return replace(state, rate=min(1.0, state.rate + state.increase))


def apply_backoff(
    state: BackoffState,
    observed_delay_s: float,
    loss: bool,
    delay_threshold_s: float = BACKOFF_DELAY_THRESHOLD_S,
) -> BackoffState:
    """Fold one period's congestion signals into the send rate.

    A lost message or a delivery slower than the threshold halves the rate
    (down to the floor); a clean period recovers it additively.
    """
    if loss or observed_delay_s > delay_threshold_s:
        return backoff_on_loss(state)
    return backoff_on_clean_period(state)
