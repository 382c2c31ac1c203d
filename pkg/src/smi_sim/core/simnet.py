# src/smi_sim/core/simnet.py
"""
Discrete-event core: event queue, event loop and message transport.

Events fire in (fire_at, seq) order, so a run is a pure function of its
inputs. The transport resolves every attempt to exactly one outcome
(delivered, intercepted or failed). Channels are drawn independently and a
message is intercepted only when every channel carrying it is captured.
Senders learn about lost attempts through delivery receipts and retransmit
with a doubling delay until the retry limit is spent.
"""

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from smi_sim.core.exceptions import EventStormError, SimulationError
from smi_sim.domain.models import ChannelKind, DeliveryOutcome
from smi_sim.domain.schemas import MessageCounts, NetworkConfig, TranscriptRecord
from smi_sim.modules.protocol.messages import ProtocolMessage
from smi_sim.modules.world.adversary import AdversaryField, interference_sample
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)

Position = Tuple[float, float]


class EventKind(str, enum.Enum):
    deliver = "deliver"
    timer = "timer"
    retry = "retry"
    undeliverable = "undeliverable"
    epoch_boundary = "epoch_boundary"
    mobility_tick = "mobility_tick"
    revocation = "revocation"


@dataclass(order=True, slots=True)
class SimEvent:
    fire_at: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)
    created_at: float = field(compare=False, default=0.0)


class EventQueue:
    def __init__(self):
        self._heap: List[SimEvent] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, fire_at: float, kind: EventKind, payload: Any = None, now: float = 0.0) -> SimEvent:
        if fire_at < now:
            raise SimulationError(f"{kind.value} event scheduled at {fire_at} before now={now}")
        self._seq += 1
        event = SimEvent(fire_at, self._seq, kind, payload, now)
        heapq.heappush(self._heap, event)
        return event

    def peek(self) -> Optional[SimEvent]:
        return self._heap[0] if self._heap else None

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)


class EventLoop:
    """Single-threaded dispatcher with an event-storm guard."""

    def __init__(self, max_events_per_sim_second: int):
        self.queue = EventQueue()
        self.now = 0.0
        self.processed = 0
        self.max_events_per_sim_second = max_events_per_sim_second
        self._handlers: Dict[EventKind, Callable[[SimEvent], None]] = {}
        self._second = -1
        self._in_second = 0
        self._stopped = False

    def register_handler(self, kind: EventKind, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_at: float, kind: EventKind, payload: Any = None) -> SimEvent:
        return self.queue.push(fire_at, kind, payload, self.now)

    def schedule_in(self, delay: float, kind: EventKind, payload: Any = None) -> SimEvent:
        return self.schedule(self.now + delay, kind, payload)

    def stop(self) -> None:
        self._stopped = True

    def run_until(self, t_end: float) -> int:
        """Process every event due at or before t_end; returns how many ran."""
        if t_end < self.now:
            raise SimulationError(f"run_until({t_end}) is before now={self.now}")
        ran = 0
        while not self._stopped:
            event = self.queue.peek()
            if event is None or event.fire_at > t_end:
                break
            self.queue.pop()
            self.now = event.fire_at
            self._guard(event)
            handler = self._handlers.get(event.kind)
            if handler is None:
                raise SimulationError(f"no handler registered for {event.kind.value}")
            handler(event)
            ran += 1
        self.processed += ran
        if not self._stopped:
            self.now = max(self.now, t_end)
        return ran

    def _guard(self, event: SimEvent) -> None:
        second = int(math.floor(event.fire_at))
        if second != self._second:
            self._second, self._in_second = second, 0
        self._in_second += 1
        if self._in_second > self.max_events_per_sim_second:
            raise EventStormError(
                f"more than {self.max_events_per_sim_second} events at t={second}s"
            )


@dataclass(slots=True)
class Attempt:
    message: ProtocolMessage
    attempt: int = 0


@dataclass(frozen=True, slots=True)
class SendResult:
    outcome: DeliveryOutcome
    delay_s: float


@dataclass
class Transport:
    """Moves protocol messages over the network, honouring the adversary field.

    locate(device_id) gives a device's current position; rng_for(device_id)
    gives that device's network random stream, which decides interceptions
    on its last hop.

    With keep_intercepted every captured message is kept in captured; with
    replay_delay_s as well, dispatch re-delivers it to its recipient later.
    """

    config: NetworkConfig
    adversary: AdversaryField
    locate: Callable[[str], Position]
    rng_for: Callable[[str], np.random.Generator]
    max_retries: int
    retry_base_delay_s: float
    proximity_radius_m: float
    sender_side: bool = False
    keep_intercepted: bool = False
    replay_delay_s: Optional[float] = None
    trace: bool = False
    counts: MessageCounts = field(default_factory=MessageCounts)
    transcript: List[TranscriptRecord] = field(default_factory=list)
    captured: List[ProtocolMessage] = field(default_factory=list)

    def delay_for(self, message: ProtocolMessage) -> float:
        """Parts travel in parallel; the slowest channel sets the delay."""
        delays = [0.0]
        for part in message.channel_plan:
            if part.channel is ChannelKind.sms:
                delays.append(self.config.sms_delay_per_segment_s * part.segments)
            elif part.channel is ChannelKind.data:
                delays.append(self.config.data_delay_s)
            else:
                delays.append(self.config.proximity_delay_s)
        return max(delays)

    def retry_delay(self, attempt: int) -> float:
        return self.retry_base_delay_s * (2 ** attempt)

    def send(self, message: ProtocolMessage, now: float, attempt: int = 0) -> SendResult:
        """Resolve one transmission attempt."""
        self.counts.sent += 1
        self.counts.sms_segments += message.sms_segments
        sender, recipient = message.sender.device_id, message.recipient.device_id
        recipient_at = self.locate(recipient)

        if any(c.is_proximity for c in message.channels):
            if math.dist(self.locate(sender), recipient_at) > self.proximity_radius_m:
                return self._resolve(message, now, attempt, DeliveryOutcome.failed)

        carriers = message.channels or (ChannelKind.sms,)
        lost = all(self._channel_lost(channel, message, recipient_at, now) for channel in carriers)
        if lost:
            if self.keep_intercepted:
                self.captured.append(message)
            return self._resolve(message, now, attempt, DeliveryOutcome.intercepted)
        return self._resolve(message, now, attempt, DeliveryOutcome.delivered)

    def _channel_lost(
        self, channel: ChannelKind, message: ProtocolMessage, recipient_at: Position, now: float
    ) -> bool:
        """One channel's fate. Channels no station sits on see only ambient loss."""
        sender, recipient = message.sender.device_id, message.recipient.device_id
        if channel not in self.adversary.channels:
            ambient = self.adversary.ambient_loss
            return ambient > 0.0 and self.rng_for(recipient).random() < ambient
        lost = interference_sample(self.adversary, recipient_at, self.rng_for(recipient), now, recipient)
        if self.sender_side:
            lost = interference_sample(
                self.adversary, self.locate(sender), self.rng_for(sender), now, sender
            ) or lost
        return lost

    def _resolve(
        self, message: ProtocolMessage, now: float, attempt: int, outcome: DeliveryOutcome
    ) -> SendResult:
        if outcome is DeliveryOutcome.delivered:
            self.counts.delivered += 1
        elif outcome is DeliveryOutcome.intercepted:
            self.counts.intercepted += 1
        else:
            self.counts.failed += 1
        if self.trace:
            self.transcript.append(
                TranscriptRecord(
                    time=now,
                    variant=message.variant.value,
                    sender=message.sender.device_id,
                    recipient=message.recipient.device_id,
                    epoch_index=message.epoch_index,
                    sequence=message.sequence,
                    channels=[c.value for c in message.channels],
                    sms_segments=message.sms_segments,
                    outcome=outcome.value,
                    attempt=attempt,
                )
            )
        return SendResult(outcome, self.delay_for(message))

    def dispatch(self, loop: EventLoop, message: ProtocolMessage, attempt: int = 0) -> SendResult:
        """Send and schedule what follows: delivery, a retry, or giving up."""
        result = self.send(message, loop.now, attempt)
        replaying = self.keep_intercepted and self.replay_delay_s is not None
        if result.outcome is DeliveryOutcome.intercepted and replaying:
            self.counts.replayed += 1
            loop.schedule_in(result.delay_s + self.replay_delay_s, EventKind.deliver, message)
        if result.outcome is DeliveryOutcome.delivered:
            loop.schedule_in(result.delay_s, EventKind.deliver, message)
        elif result.outcome is DeliveryOutcome.failed:
            loop.schedule_in(0.0, EventKind.undeliverable, message)
        elif attempt < self.max_retries:
            # The missing receipt shows up after the transit time; back off from there
            loop.schedule_in(
                result.delay_s + self.retry_delay(attempt), EventKind.retry, Attempt(message, attempt + 1)
            )
        else:
            loop.schedule_in(result.delay_s, EventKind.undeliverable, message)
        return result
