# src/smi_sim/modules/protocol/channels.py
"""
Channel planning and the multi-channel interference model.

Signatures and dialing parameters always travel by SMS. Sealed connection
bodies may move to the data channel when it is available, which is what makes
an epoch need simultaneous interference on every channel in use.
"""

import math
from typing import Iterable, Sequence, Tuple

import numpy as np

from smi_sim.config import SMS_SEGMENT_CHARS
from smi_sim.core.exceptions import ProtocolError
from smi_sim.domain.models import ChannelKind, MessageVariant
from smi_sim.modules.protocol.messages import ChannelAssignment, ProtocolMessage

SMS_ONLY_VARIANTS = {
    MessageVariant.dialing_1,
    MessageVariant.dialing_2,
    MessageVariant.dialing_3,
    MessageVariant.epoch_end_tag,
}
MONTE_CARLO_CHUNK = 500_000
PROXIMITY_VARIANTS = {
    MessageVariant.trusted_loc_offer,
    MessageVariant.trusted_loc_ack,
    MessageVariant.trusted_loc_confirm,
}


def base64_chars(size_bytes: int) -> int:
    return 4 * math.ceil(size_bytes / 3)


def sms_segments(size_bytes: int) -> int:
    if size_bytes <= 0:
        return 0
    return max(1, math.ceil(base64_chars(size_bytes) / SMS_SEGMENT_CHARS))


def _assign(part: str, channel: ChannelKind, size: int) -> ChannelAssignment:
    segments = sms_segments(size) if channel is ChannelKind.sms else 0
    return ChannelAssignment(part=part, channel=channel, size_bytes=size, segments=segments)


def plan_channels(
    message: ProtocolMessage, available: Iterable[ChannelKind]
) -> Tuple[ChannelAssignment, ...]:
    available = tuple(available)
    if ChannelKind.sms not in available:
        raise ProtocolError("the SMS channel must be available")

    body_size = len(message.envelope.to_bytes()) if message.envelope else 0
    signature_size = len(message.clear_signature)
    plan = []

    if message.variant in PROXIMITY_VARIANTS:
        proximity = next((c for c in available if c.is_proximity), None)
        if proximity is None:
            raise ProtocolError(f"{message.variant.value} needs a proximity channel")
        if body_size:
            plan.append(_assign("body", proximity, body_size))
        if signature_size:
            plan.append(_assign("signature", ChannelKind.sms, signature_size))
        return tuple(plan)

    if message.variant in SMS_ONLY_VARIANTS:
        body_channel = ChannelKind.sms
    else:
        body_channel = ChannelKind.data if ChannelKind.data in available else ChannelKind.sms

    if body_size:
        plan.append(_assign("body", body_channel, body_size))
    if signature_size:
        plan.append(_assign("signature", ChannelKind.sms, signature_size))
    return tuple(plan)


def multi_channel_success_probability(p: float, ks: Sequence[int]) -> float:
    """Chance an epoch survives when each channel i is blocked with p^{k_i}."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must be in [0, 1), got {p}")
    result = 1.0
    for k in ks:
        result *= 1.0 - p ** k
    return result


def simulate_multichannel_epochs(
    p: float, ks: Sequence[int], trials: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo estimate of multi_channel_success_probability.

    A channel is lost for the epoch when all k_i of its exchanges are
    intercepted; the epoch survives when no channel is lost.
    """
    survived = np.ones(trials, dtype=bool)
    for k in ks:
        blocked = np.ones(trials, dtype=bool)
        for _ in range(k):
            blocked &= rng.random(trials) < p
        survived &= ~blocked
    return float(survived.mean())


def simulate_epoch_interception(
    p: float, k: int, trials: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo rate at which all k exchanges of an epoch are intercepted."""
    hits = 0
    remaining = trials
    while remaining > 0:
        chunk = min(remaining, MONTE_CARLO_CHUNK)
        draws = rng.random((chunk, k)) < p
        hits += int(draws.all(axis=1).sum())
        remaining -= chunk
    return hits / trials
