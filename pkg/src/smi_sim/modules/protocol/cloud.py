# src/smi_sim/modules/protocol/cloud.py
"""
Cloud-provider probes and third-party verifier proofs.

    P ↦ U : f_PK_U( s(L_P, t_P), U_P, D_P )
    U → P : S_U( probe body, L_U, t_U, U_U, D_U ), f_PK_P( L_U, t_U, U_U, D_U )

A probe succeeds when the answer arrives in time, names the probed device and
carries a valid signature over the probe body together with the sealed
statement. The provider is the initiator, so the device's self-declared
location is credible to it.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from smi_sim.core.exceptions import CryptoError, MessageFormatError, SealError
from smi_sim.domain.models import (
    ChannelKind,
    IdentityProof,
    LocationReport,
    MessageVariant,
    PrincipalIdentity,
    ProbeKind,
)
from smi_sim.modules.crypto.primitives import KeyPair, encode_fields, seal, sign, verify
from smi_sim.modules.protocol.channels import plan_channels
from smi_sim.modules.protocol.engine import ProbeSlot
from smi_sim.modules.protocol.messages import (
    ProtocolMessage,
    open_fields,
    parse_statement,
    statement_fields,
)


@dataclass(frozen=True, slots=True)
class ProbeOutcome:
    success: bool
    location: Optional[LocationReport] = None
    reason: str = ""


@dataclass(frozen=True, slots=True)
class ProbeTranscript:
    probe: ProtocolMessage
    response: Optional[ProtocolMessage]
    outcome: ProbeOutcome


def plan_probe_times(
    epoch_start: int,
    epoch_length_s: int,
    count: int,
    rng: np.random.Generator,
) -> Tuple[ProbeSlot, ...]:
    """Spread count probes over an epoch, alternating periodic and random slots."""
    spacing = epoch_length_s // count
    slots = []
    for j in range(count):
        base = epoch_start + j * spacing
        if j % 2 == 0:
            slots.append(ProbeSlot(base, ProbeKind.periodic))
        else:
            slots.append(ProbeSlot(base + int(rng.integers(0, max(1, spacing))), ProbeKind.aperiodic))
    return tuple(slots)


def build_probe(
    provider: PrincipalIdentity,
    device: PrincipalIdentity,
    device_key: bytes,
    provider_location: LocationReport,
    now: int,
    rng: np.random.Generator,
    sequence: int = 0,
    channels=(ChannelKind.sms,),
) -> ProtocolMessage:
    body = encode_fields(
        provider_location.encode(), provider.user_id.encode(), provider.device_id.encode()
    )
    message = ProtocolMessage(
        variant=MessageVariant.cloud_probe,
        sender=provider,
        recipient=device,
        epoch_index=0,
        sequence=sequence,
        envelope=seal(device_key, body, rng),
    )
    return message.with_plan(plan_channels(message, channels))


def response_payload(probe: ProtocolMessage, statement: Sequence[bytes]) -> bytes:
    """What the device signs: the probe it answers bound to its sealed statement."""
    return encode_fields(probe.envelope.to_bytes(), *statement)


def answer_probe(
    device: PrincipalIdentity,
    device_keys: KeyPair,
    provider_key: bytes,
    probe: ProtocolMessage,
    location: LocationReport,
    now: int,
    rng: np.random.Generator,
    channels=(ChannelKind.sms,),
) -> Optional[ProtocolMessage]:
    """Device side. Returns None when the probe cannot be opened."""
    try:
        fields = open_fields(device_keys, probe)
    except (SealError, MessageFormatError):
        return None
    if fields[1].decode(errors="replace") != probe.sender.user_id:
        return None
    statement = statement_fields(location, now, device)
    response = ProtocolMessage(
        variant=MessageVariant.cloud_response,
        sender=device,
        recipient=probe.sender,
        epoch_index=0,
        sequence=probe.sequence,
        envelope=seal(provider_key, encode_fields(*statement), rng),
        clear_signature=sign(device_keys.private_key, response_payload(probe, statement)),
    )
    return response.with_plan(plan_channels(response, channels))


def verify_probe_response(
    provider_keys: KeyPair,
    device: PrincipalIdentity,
    device_key: bytes,
    probe: ProtocolMessage,
    response: Optional[ProtocolMessage],
    sent_at: int,
    received_at: int,
    timeout_s: int,
) -> ProbeOutcome:
    if response is None:
        return ProbeOutcome(False, reason="no response")
    if received_at - sent_at > timeout_s:
        return ProbeOutcome(False, reason="response timed out")
    if response.sender != device or response.sequence != probe.sequence:
        return ProbeOutcome(False, reason="response does not match probe")
    try:
        fields = open_fields(provider_keys, response)
        statement = parse_statement(fields)
    except (SealError, MessageFormatError, CryptoError):
        return ProbeOutcome(False, reason="undecryptable response")
    if not verify(device_key, response_payload(probe, fields), response.clear_signature):
        return ProbeOutcome(False, reason="bad probe signature")
    if not statement.matches(device):
        return ProbeOutcome(False, reason="sealed identity does not match device")
    return ProbeOutcome(True, location=statement.location)


def cloud_probe_cycle(
    provider: PrincipalIdentity,
    provider_keys: KeyPair,
    device: PrincipalIdentity,
    device_keys: KeyPair,
    now: int,
    rng: np.random.Generator,
    provider_location: LocationReport,
    device_location: LocationReport,
    timeout_s: int = 3600,
    deliver: Optional[Callable[[ProtocolMessage], Optional[float]]] = None,
) -> ProbeTranscript:
    """Run one probe round trip in process.

    deliver(message) returns the transit delay in seconds, or None when the
    message was lost; without it delivery is instant.
    """
    deliver = deliver or (lambda message: 0.0)
    probe = build_probe(provider, device, device_keys.public_key, provider_location, now, rng)
    delay = deliver(probe)
    if delay is None:
        return ProbeTranscript(probe, None, ProbeOutcome(False, reason="probe lost"))
    arrived = now + int(delay)
    response = answer_probe(device, device_keys, provider_keys.public_key, probe, device_location, arrived, rng)
    back = deliver(response) if response is not None else None
    if back is None:
        return ProbeTranscript(probe, response, ProbeOutcome(False, reason="response lost"))
    outcome = verify_probe_response(
        provider_keys, device, device_keys.public_key, probe, response, now, arrived + int(back), timeout_s
    )
    return ProbeTranscript(probe, response, outcome)


def issue_identity_proof(
    verifier: PrincipalIdentity,
    verifier_keys: KeyPair,
    subject: PrincipalIdentity,
    subject_key: bytes,
    now: int,
) -> IdentityProof:
    unsigned = IdentityProof(verifier=verifier, subject=subject, subject_key=subject_key, issued_at=now)
    return replace(unsigned, signature=sign(verifier_keys.private_key, unsigned.payload()))
