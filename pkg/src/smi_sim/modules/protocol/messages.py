# src/smi_sim/modules/protocol/messages.py
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

from smi_sim.core.exceptions import CryptoError, MessageFormatError, SealError
from smi_sim.domain.models import (
    ChannelKind,
    LocationReport,
    MessageVariant,
    PrincipalIdentity,
)
from smi_sim.modules.crypto.primitives import (
    CipherEnvelope,
    KeyPair,
    Nonce,
    decode_fields,
    decode_int,
    encode_fields,
    encode_int,
    open_envelope,
)

# Number of envelope fields per variant
ENVELOPE_FIELDS = {
    MessageVariant.dialing_1: 6,
    MessageVariant.dialing_2: 6,
    MessageVariant.dialing_3: 1,
    MessageVariant.conn_initiator: 5,
    MessageVariant.conn_participant: 5,
    MessageVariant.epoch_end_tag: 2,
    MessageVariant.trusted_loc_offer: 4,
    MessageVariant.trusted_loc_ack: 6,
    MessageVariant.trusted_loc_confirm: 1,
    MessageVariant.cloud_probe: 3,
    MessageVariant.cloud_response: 4,
}


@dataclass(frozen=True, slots=True)
class ChannelAssignment:
    part: str
    channel: ChannelKind
    size_bytes: int
    segments: int


@dataclass(frozen=True, slots=True)
class ProtocolMessage:
    """One protocol message: a sealed body plus an optional signature sent in clear."""

    variant: MessageVariant
    sender: PrincipalIdentity
    recipient: PrincipalIdentity
    epoch_index: int
    sequence: int
    envelope: Optional[CipherEnvelope] = None
    clear_signature: bytes = b""
    channel_plan: Tuple[ChannelAssignment, ...] = field(default=())

    @property
    def sms_segments(self) -> int:
        return sum(a.segments for a in self.channel_plan if a.channel is ChannelKind.sms)

    @property
    def channels(self) -> Tuple[ChannelKind, ...]:
        seen: List[ChannelKind] = []
        for assignment in self.channel_plan:
            if assignment.channel not in seen:
                seen.append(assignment.channel)
        return tuple(seen)

    def with_plan(self, plan: Tuple[ChannelAssignment, ...]) -> "ProtocolMessage":
        return replace(self, channel_plan=plan)


@dataclass(frozen=True, slots=True)
class SealedStatement:
    """Decoded (location, time, user, device) header shared by most envelopes."""

    location: LocationReport
    time: int
    user_id: str
    device_id: str

    def matches(self, identity: PrincipalIdentity) -> bool:
        return self.user_id == identity.user_id and self.device_id == identity.device_id


def statement_fields(
    location: LocationReport, time: int, identity: PrincipalIdentity
) -> Tuple[bytes, bytes, bytes, bytes]:
    return (
        location.encode(),
        encode_int(time),
        identity.user_id.encode(),
        identity.device_id.encode(),
    )


def parse_statement(fields: List[bytes]) -> SealedStatement:
    try:
        return SealedStatement(
            location=LocationReport.decode(fields[0]),
            time=decode_int(fields[1]),
            user_id=fields[2].decode(),
            device_id=fields[3].decode(),
        )
    except (CryptoError, UnicodeDecodeError, IndexError) as exc:
        raise MessageFormatError(f"bad sealed statement: {exc}") from exc


def open_fields(keypair: KeyPair, message: ProtocolMessage) -> List[bytes]:
    """Decrypt and split a message body. SealError and MessageFormatError propagate."""
    if message.envelope is None:
        raise MessageFormatError(f"{message.variant.value} has no envelope")
    plaintext = open_envelope(keypair, message.envelope)
    try:
        return decode_fields(plaintext, ENVELOPE_FIELDS[message.variant])
    except CryptoError as exc:
        if isinstance(exc, SealError):
            raise
        raise MessageFormatError(str(exc)) from exc


def dialing_2_statement(a: Nonce) -> bytes:
    return encode_fields(b"smi-dial2/v1", a.value)


def dialing_3_statement(b: Nonce, a: Nonce) -> bytes:
    return encode_fields(b"smi-dial3/v1", b.value, a.value)


def end_tag_statement(epoch_index: int, last_signature: bytes) -> bytes:
    return encode_fields(b"smi-end/v1", encode_int(epoch_index), last_signature)
