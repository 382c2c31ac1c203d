# src/smi_sim/modules/protocol/trusted_location.py
"""
Three-way handshake with a trusted-location endpoint over a proximity channel.

    T ⇒ U : f_PK_U( s_T(L_T, t_T), U_T, D_T, c1 )
    U → T : S_U(c1), f_PK_T( L_U, t_U, U_U, D_U, c2, c1 )
    T → U : S_T(c2), f_PK_U( c2 )

The device leaves with a signed, time-limited report of the endpoint's
location that it can quote in later connection exchanges.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from smi_sim.config import NONCE_BYTES, PROXIMITY_RADIUS_M, TRUSTED_LOCATION_TTL_S
from smi_sim.core.exceptions import ProximityError, ProtocolError, SealError
from smi_sim.domain.models import (
    LocationReport,
    LocationTrust,
    MessageVariant,
    PrincipalIdentity,
)
from smi_sim.modules.crypto.primitives import (
    KeyPair,
    make_nonce,
    seal,
    sign,
    verify,
    verify_certificate,
    encode_fields,
)
from smi_sim.modules.protocol.messages import (
    ProtocolMessage,
    open_fields,
    parse_statement,
    statement_fields,
)


@dataclass(frozen=True, slots=True)
class TrustedEndpointCredentials:
    identity: PrincipalIdentity
    keypair: KeyPair
    certificate: bytes
    position: Tuple[float, float]


@dataclass(frozen=True, slots=True)
class TrustedHandshakeResult:
    report: LocationReport
    messages: Tuple[ProtocolMessage, ...]


def issue_trusted_report(
    endpoint: TrustedEndpointCredentials,
    now: int,
    ttl: int = TRUSTED_LOCATION_TTL_S,
    subject_device: str = "",
) -> LocationReport:
    unsigned = LocationReport(
        position=endpoint.position,
        time=now,
        trust=LocationTrust.trusted,
        issuer=endpoint.identity,
        ttl=ttl,
        issuer_key=endpoint.keypair.public_key,
        issuer_certificate=endpoint.certificate,
        subject_device=subject_device,
    )
    signature = sign(endpoint.keypair.private_key, unsigned.signed_payload())
    return replace(unsigned, signature=signature)


def verify_trusted_report(
    report: LocationReport,
    root_public_key: Optional[bytes],
    holder_device: Optional[str] = None,
    strong: bool = False,
) -> bool:
    """Certificate chains to the root, signature verifies, and (strong) the report names the holder."""
    if not report.is_trusted or report.issuer is None or root_public_key is None:
        return False
    if not verify_certificate(
        root_public_key, report.issuer.device_id, report.issuer_key, report.issuer_certificate
    ):
        return False
    if not verify(report.issuer_key, report.signed_payload(), report.signature):
        return False
    if strong and report.subject_device != (holder_device or ""):
        return False
    return True


def trusted_location_handshake(
    endpoint: TrustedEndpointCredentials,
    device: PrincipalIdentity,
    device_keys: KeyPair,
    device_position: Tuple[float, float],
    now: int,
    rng: np.random.Generator,
    root_public_key: bytes,
    ttl: int = TRUSTED_LOCATION_TTL_S,
    proximity_radius_m: float = PROXIMITY_RADIUS_M,
    strong: bool = False,
    nonce_bytes: int = NONCE_BYTES,
) -> TrustedHandshakeResult:
    distance = math.dist(endpoint.position, device_position)
    if distance > proximity_radius_m:
        raise ProximityError(
            f"{device} is {distance:.1f} m from {endpoint.identity}, limit {proximity_radius_m} m"
        )

    # Step 1: endpoint offers its signed location
    report = issue_trusted_report(endpoint, now, ttl, subject_device=device.device_id if strong else "")
    c1 = make_nonce(rng, nonce_bytes)
    offer = ProtocolMessage(
        variant=MessageVariant.trusted_loc_offer,
        sender=endpoint.identity,
        recipient=device,
        epoch_index=0,
        sequence=1,
        envelope=seal(
            device_keys.public_key,
            encode_fields(
                report.encode(),
                endpoint.identity.user_id.encode(),
                endpoint.identity.device_id.encode(),
                c1.value,
            ),
            rng,
        ),
    )

    fields = _open(device_keys, offer)
    received = LocationReport.decode(fields[0])
    if not verify_trusted_report(received, root_public_key, device.device_id, strong):
        raise ProtocolError(f"trusted report from {endpoint.identity} failed verification")
    received_c1 = fields[3]

    # Step 2: device answers with its own statement and a fresh challenge
    c2 = make_nonce(rng, nonce_bytes)
    own = LocationReport(position=device_position, time=now)
    ack = ProtocolMessage(
        variant=MessageVariant.trusted_loc_ack,
        sender=device,
        recipient=endpoint.identity,
        epoch_index=0,
        sequence=2,
        envelope=seal(
            endpoint.keypair.public_key,
            encode_fields(*statement_fields(own, now, device), c2.value, received_c1),
            rng,
        ),
        clear_signature=sign(device_keys.private_key, received_c1),
    )

    ack_fields = _open(endpoint.keypair, ack)
    statement = parse_statement(ack_fields[:4])
    if not statement.matches(device) or ack_fields[5] != c1.value:
        raise ProtocolError("trusted-location acknowledgement does not match the offer")
    if not verify(device_keys.public_key, c1.value, ack.clear_signature):
        raise ProtocolError("device signature over the endpoint challenge is invalid")

    # Step 3: endpoint proves liveness by signing the device challenge
    confirm = ProtocolMessage(
        variant=MessageVariant.trusted_loc_confirm,
        sender=endpoint.identity,
        recipient=device,
        epoch_index=0,
        sequence=3,
        envelope=seal(device_keys.public_key, encode_fields(ack_fields[4]), rng),
        clear_signature=sign(endpoint.keypair.private_key, ack_fields[4]),
    )
    confirm_fields = _open(device_keys, confirm)
    if confirm_fields[0] != c2.value or not verify(
        received.issuer_key, c2.value, confirm.clear_signature
    ):
        raise ProtocolError("endpoint confirmation does not match the device challenge")

    return TrustedHandshakeResult(report=received, messages=(offer, ack, confirm))


def _open(keys: KeyPair, message: ProtocolMessage):
    try:
        return open_fields(keys, message)
    except SealError as exc:
        raise ProtocolError(f"{message.variant.value} could not be opened") from exc
