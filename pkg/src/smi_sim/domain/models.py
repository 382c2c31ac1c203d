# src/smi_sim/domain/models.py
import enum
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

from smi_sim.core.exceptions import MessageFormatError


class PrincipalKind(str, enum.Enum):
    mobile = "mobile"
    cloud_provider = "cloud-provider"
    trusted_location_endpoint = "trusted-location-endpoint"
    third_party_verifier = "third-party-verifier"


class BindingStatus(str, enum.Enum):
    active = "active"
    revoked = "revoked"
    conflicted = "conflicted"


class LocationTrust(str, enum.Enum):
    untrusted = "untrusted"
    trusted = "trusted"


class EpochPhase(str, enum.Enum):
    dialing = "dialing"
    connection = "connection"
    completed = "completed"
    aborted = "aborted"


class EpochRole(str, enum.Enum):
    initiator = "initiator"
    participant = "participant"


class MessageVariant(str, enum.Enum):
    dialing_1 = "Dialing1"
    dialing_2 = "Dialing2"
    dialing_3 = "Dialing3"
    conn_initiator = "ConnInitiator"
    conn_participant = "ConnParticipant"
    epoch_end_tag = "EpochEndTag"
    trusted_loc_offer = "TrustedLocOffer"
    trusted_loc_ack = "TrustedLocAck"
    trusted_loc_confirm = "TrustedLocConfirm"
    cloud_probe = "CloudProbe"
    cloud_response = "CloudResponse"


class ChannelKind(str, enum.Enum):
    sms = "sms"
    data = "data"
    bluetooth = "bluetooth"
    nfc = "nfc"

    @property
    def is_proximity(self) -> bool:
        return self in (ChannelKind.bluetooth, ChannelKind.nfc)

    @property
    def is_cellular(self) -> bool:
        return self in (ChannelKind.sms, ChannelKind.data)


class ProbeKind(str, enum.Enum):
    periodic = "periodic"
    aperiodic = "aperiodic"


class MobilityModel(str, enum.Enum):
    stationary = "stationary"
    simple_traffic = "simple-traffic"
    random_walk = "random-walk"
    prob_random_walk = "prob-random-walk"
    manhattan = "manhattan"
    downtown_manhattan = "downtown-manhattan"
    composite = "composite"


class DeliveryOutcome(str, enum.Enum):
    delivered = "delivered"
    intercepted = "intercepted"
    failed = "failed"


@dataclass(frozen=True, slots=True)
class PrincipalIdentity:
    user_id: str
    device_id: str
    kind: PrincipalKind = PrincipalKind.mobile

    def __str__(self) -> str:
        return f"{self.user_id}/{self.device_id}"


_TRUST_CODES = {LocationTrust.untrusted: 0, LocationTrust.trusted: 1}
_TRUST_FROM_CODE = {v: k for k, v in _TRUST_CODES.items()}
_HEADER = struct.Struct(">ddqBq")


def _pack_blob(value: bytes) -> bytes:
    return len(value).to_bytes(4, "big") + value


def _unpack_blobs(data: bytes, offset: int, count: int) -> Tuple[list, int]:
    out = []
    for _ in range(count):
        if offset + 4 > len(data):
            raise MessageFormatError("truncated location report")
        size = int.from_bytes(data[offset:offset + 4], "big")
        offset += 4
        if offset + size > len(data):
            raise MessageFormatError("truncated location report")
        out.append(data[offset:offset + size])
        offset += size
    return out, offset


@dataclass(frozen=True, slots=True)
class LocationReport:
    """A declared position at a time.

    Untrusted reports are self-declared. Trusted reports carry the endpoint
    identity, its certified key and a signature over the position and time
    (optionally bound to the subject device).
    """

    position: Tuple[float, float]
    time: int
    trust: LocationTrust = LocationTrust.untrusted
    issuer: Optional[PrincipalIdentity] = None
    ttl: Optional[int] = None
    signature: bytes = b""
    issuer_key: bytes = b""
    issuer_certificate: bytes = b""
    subject_device: str = ""

    @property
    def is_trusted(self) -> bool:
        return self.trust is LocationTrust.trusted

    def usable_at(self, t: int) -> bool:
        if not self.is_trusted:
            return True
        return self.ttl is not None and t <= self.time + self.ttl

    def as_untrusted(self) -> "LocationReport":
        return LocationReport(position=self.position, time=self.time)

    def signed_payload(self) -> bytes:
        """Bytes the issuing endpoint signs."""
        issuer_id = self.issuer.device_id if self.issuer else ""
        return b"".join(
            [
                b"smi-location/v1",
                struct.pack(">ddq", self.position[0], self.position[1], int(self.time)),
                _pack_blob(issuer_id.encode()),
                _pack_blob(self.subject_device.encode()),
                struct.pack(">q", -1 if self.ttl is None else int(self.ttl)),
            ]
        )

    def encode(self) -> bytes:
        issuer_user = self.issuer.user_id if self.issuer else ""
        issuer_device = self.issuer.device_id if self.issuer else ""
        return _HEADER.pack(
            float(self.position[0]),
            float(self.position[1]),
            int(self.time),
            _TRUST_CODES[self.trust],
            -1 if self.ttl is None else int(self.ttl),
        ) + b"".join(
            _pack_blob(part)
            for part in (
                issuer_user.encode(),
                issuer_device.encode(),
                self.signature,
                self.issuer_key,
                self.issuer_certificate,
                self.subject_device.encode(),
            )
        )

    @classmethod
    def decode(cls, data: bytes) -> "LocationReport":
        if len(data) < _HEADER.size:
            raise MessageFormatError("location report too short")
        x, y, t, trust_code, ttl = _HEADER.unpack_from(data, 0)
        if trust_code not in _TRUST_FROM_CODE:
            raise MessageFormatError(f"unknown trust code {trust_code}")
        blobs, offset = _unpack_blobs(data, _HEADER.size, 6)
        if offset != len(data):
            raise MessageFormatError("trailing bytes after location report")
        issuer_user, issuer_device, signature, issuer_key, certificate, subject = blobs
        issuer = None
        if issuer_device:
            issuer = PrincipalIdentity(
                issuer_user.decode(),
                issuer_device.decode(),
                PrincipalKind.trusted_location_endpoint,
            )
        return cls(
            position=(x, y),
            time=t,
            trust=_TRUST_FROM_CODE[trust_code],
            issuer=issuer,
            ttl=None if ttl < 0 else ttl,
            signature=signature,
            issuer_key=issuer_key,
            issuer_certificate=certificate,
            subject_device=subject.decode(),
        )


@dataclass(frozen=True, slots=True)
class IdentityProof:
    """A verifier's signed statement that it probed subject at issued_at."""

    verifier: PrincipalIdentity
    subject: PrincipalIdentity
    subject_key: bytes
    issued_at: int
    signature: bytes = b""

    def payload(self) -> bytes:
        parts = (
            b"smi-proof/v1",
            self.verifier.device_id.encode(),
            self.subject.user_id.encode(),
            self.subject.device_id.encode(),
            self.subject_key,
            struct.pack(">q", int(self.issued_at)),
        )
        return b"".join(_pack_blob(p) for p in parts)
