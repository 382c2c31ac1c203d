from smi_sim.modules.identity.store import (
    ConflictRecord,
    KeyBinding,
    KeyBindingStore,
    RevocationNotice,
    admin_reset,
    binding_status,
    identity_for_device,
    active_binding,
    register_binding,
    revoke_key,
)

__all__ = [
    "ConflictRecord",
    "KeyBinding",
    "KeyBindingStore",
    "RevocationNotice",
    "admin_reset",
    "binding_status",
    "identity_for_device",
    "active_binding",
    "register_binding",
    "revoke_key",
]
