from smi_sim.modules.reputation.threshold import ThresholdPolicy, compute_threshold, l_of_p
from smi_sim.modules.reputation.engine import (
    ReputationLedger,
    Weights,
    add_identity_proof,
    apply_idle_decay,
    calibrate_weights,
    close_epoch,
    closed_form_score,
    committed_score,
    is_authenticated,
    new_ledger,
    per_epoch_increase,
    record_interaction,
    reset_ledger,
    revocation_eligible,
    score,
    track_peak,
)

__all__ = [
    "ThresholdPolicy",
    "compute_threshold",
    "l_of_p",
    "ReputationLedger",
    "Weights",
    "add_identity_proof",
    "apply_idle_decay",
    "calibrate_weights",
    "close_epoch",
    "closed_form_score",
    "committed_score",
    "is_authenticated",
    "new_ledger",
    "per_epoch_increase",
    "record_interaction",
    "reset_ledger",
    "revocation_eligible",
    "score",
    "track_peak",
]
