from smi_sim.modules.scheduler.engine import (
    ActiveEntry,
    BackoffState,
    ContactEntry,
    QuotaState,
    apply_backoff,
    assign_batches,
    backoff_on_clean_period,
    backoff_on_loss,
    build_active_list,
    can_start_epoch,
    estimate_epoch_cost,
    new_quota,
    record_send,
    roll_quota,
    suggest_priority,
)

__all__ = [
    "ActiveEntry",
    "BackoffState",
    "ContactEntry",
    "QuotaState",
    "apply_backoff",
    "assign_batches",
    "backoff_on_clean_period",
    "backoff_on_loss",
    "build_active_list",
    "can_start_epoch",
    "estimate_epoch_cost",
    "new_quota",
    "record_send",
    "roll_quota",
    "suggest_priority",
]
