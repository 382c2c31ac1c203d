from smi_sim.modules.protocol.messages import ChannelAssignment, ProtocolMessage
from smi_sim.modules.protocol.channels import (
    multi_channel_success_probability,
    plan_channels,
    simulate_multichannel_epochs,
)
from smi_sim.modules.protocol.engine import (
    AuditNote,
    EpochAborted,
    EpochState,
    HandleResult,
    IncreaseRep,
    InteractionRecord,
    KeyConflictDetected,
    ProbeSlot,
    ProtocolEngine,
    verify_epoch_transcript,
)
from smi_sim.modules.protocol.trusted_location import (
    TrustedEndpointCredentials,
    trusted_location_handshake,
    verify_trusted_report,
)
from smi_sim.modules.protocol.cloud import (
    ProbeOutcome,
    ProbeTranscript,
    cloud_probe_cycle,
    issue_identity_proof,
)

__all__ = [
    "ChannelAssignment",
    "ProtocolMessage",
    "multi_channel_success_probability",
    "plan_channels",
    "simulate_multichannel_epochs",
    "AuditNote",
    "EpochAborted",
    "EpochState",
    "HandleResult",
    "IncreaseRep",
    "InteractionRecord",
    "KeyConflictDetected",
    "ProbeSlot",
    "ProtocolEngine",
    "verify_epoch_transcript",
    "TrustedEndpointCredentials",
    "trusted_location_handshake",
    "verify_trusted_report",
    "ProbeOutcome",
    "ProbeTranscript",
    "cloud_probe_cycle",
    "issue_identity_proof",
]
