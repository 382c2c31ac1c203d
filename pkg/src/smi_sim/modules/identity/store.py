# src/smi_sim/modules/identity/store.py
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Union

from smi_sim.domain.models import BindingStatus, PrincipalIdentity
from smi_sim.modules.crypto.primitives import KEY_BYTES
from smi_sim.core.exceptions import IdentityError
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(slots=True)
class KeyBinding:
    identity: PrincipalIdentity
    public_key: bytes
    status: BindingStatus
    registered_at: int


@dataclass(frozen=True, slots=True)
class ConflictRecord:
    identity: PrincipalIdentity
    existing_key: bytes
    offered_key: bytes
    detected_at: int


@dataclass(frozen=True, slots=True)
class RevocationNotice:
    identity: PrincipalIdentity
    public_key: bytes
    recipient: PrincipalIdentity
    reason: str
    revoked_at: int


@dataclass
class KeyBindingStore:
    """One principal's view of identity/key bindings.

    The store never holds two active keys for one identity. A second key
    offered while one is active turns the identity into a conflicted one,
    which stays unauthenticatable until an administrative reset.
    """

    owner: Optional[PrincipalIdentity] = None
    bindings: Dict[PrincipalIdentity, KeyBinding] = field(default_factory=dict)
    by_device: Dict[str, PrincipalIdentity] = field(default_factory=dict)
    conflicts: List[ConflictRecord] = field(default_factory=list)
    revocations: List[RevocationNotice] = field(default_factory=list)


def register_binding(
    store: KeyBindingStore, identity: PrincipalIdentity, public_key: bytes, now: int
) -> Union[KeyBinding, ConflictRecord]:
    if len(public_key) != KEY_BYTES:
        raise IdentityError(f"public key for {identity} must be {KEY_BYTES} bytes")

    current = store.bindings.get(identity)
    if current is None:
        binding = KeyBinding(identity, public_key, BindingStatus.active, now)
        store.bindings[identity] = binding
        store.by_device[identity.device_id] = identity
        return binding

    if current.status is BindingStatus.active and current.public_key == public_key:
        return current

    record = ConflictRecord(
        identity=identity,
        existing_key=current.public_key,
        offered_key=public_key,
        detected_at=now,
    )
    if current.status is BindingStatus.active:
        current.status = BindingStatus.conflicted
        logger.warning(f"⚠️ Conflicting key offered for {identity}, identity suspended")
    elif current.status is BindingStatus.revoked:
        logger.warning(f"⚠️ Registration refused for revoked {identity}, admin reset required")
    store.conflicts.append(record)
    return record


def revoke_key(
    store: KeyBindingStore,
    identity: PrincipalIdentity,
    now: int,
    audience: Iterable[PrincipalIdentity] = (),
    reason: str = "revoked by owner",
) -> List[RevocationNotice]:
    """Revoke the active key and notify every peer holding reputation for it.

    Revoking a binding that is not active notifies nobody.
    """
    current = store.bindings.get(identity)
    if current is None:
        raise IdentityError(f"no binding to revoke for {identity}")
    if current.status is not BindingStatus.active:
        logger.warning(f"⚠️ Key for {identity} is already {current.status.value}, nothing to revoke")
        return []
    current.status = BindingStatus.revoked
    notices = [
        RevocationNotice(identity, current.public_key, peer, reason, now)
        for peer in sorted(set(audience), key=lambda p: p.device_id)
    ]
    store.revocations.extend(notices)
    logger.info(f"Revoked key for {identity}: {reason} ({len(notices)} peers notified)")
    return notices


def admin_reset(store: KeyBindingStore, identity: PrincipalIdentity) -> None:
    """Forget a conflicted or revoked binding so the identity can register again."""
    current = store.bindings.get(identity)
    if current is None or current.status is BindingStatus.active:
        raise IdentityError(f"{identity} is neither conflicted nor revoked")
    del store.bindings[identity]


def active_binding(store: KeyBindingStore, identity: PrincipalIdentity) -> Optional[bytes]:
    binding = store.bindings.get(identity)
    if binding is None or binding.status is not BindingStatus.active:
        return None
    return binding.public_key


def binding_status(store: KeyBindingStore, identity: PrincipalIdentity) -> Optional[BindingStatus]:
    binding = store.bindings.get(identity)
    return binding.status if binding else None


def identity_for_device(store: KeyBindingStore, device_id: str) -> Optional[PrincipalIdentity]:
    return store.by_device.get(device_id)
