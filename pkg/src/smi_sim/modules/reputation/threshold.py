# src/smi_sim/modules/reputation/threshold.py
import math

from pydantic import BaseModel, ConfigDict, model_validator

from smi_sim.core.exceptions import ThresholdError

# Headroom above the interference bound when it exceeds the baseline threshold
THRESHOLD_MARGIN = 0.01


def l_of_p(p: float) -> float:
    """Ratio log(1-p)/log(p): exchanges per epoch needed per unit of adversary effort."""
    if not 0.0 < p < 1.0:
        raise ThresholdError(f"l(p) is defined for 0 < p < 1, got {p}")
    return math.log(1.0 - p) / math.log(p)


class ThresholdPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta_threshold: float
    epochs_required: int
    k: int
    p_design: float
    per_epoch_increase: float
    delta_normalized: float

    @model_validator(mode="after")
    def _interference_bound(self) -> "ThresholdPolicy":
        if self.delta_threshold <= 0:
            raise ValueError("threshold must be positive")
        if 0.0 < self.p_design < 1.0:
            bound = self.epochs_required * self.k * l_of_p(self.p_design)
            if not self.delta_normalized > bound:
                raise ValueError(
                    f"normalized threshold {self.delta_normalized:.2f} does not exceed "
                    f"L·k·l(p) = {bound:.2f}"
                )
        return self


def compute_threshold(
    p: float, epochs_required: int, k: int, per_epoch_m: float
) -> ThresholdPolicy:
    """Smallest threshold that needs L baseline epochs and beats interference p.

    Scores are normalized to exchange units with per_epoch_m / k per exchange,
    so Δ_norm = Δ·k / per_epoch_m must exceed L·k·l(p).
    """
    if not 0.0 <= p < 1.0:
        raise ThresholdError(f"interference probability must be in [0, 1), got {p}")
    if epochs_required < 1 or k < 1 or per_epoch_m <= 0:
        raise ThresholdError("epochs_required, k and per_epoch_m must be positive")

    factor = 1.0
    if p > 0.0:
        lp = l_of_p(p)
        if lp * (1.0 + THRESHOLD_MARGIN) > factor:
            factor = lp * (1.0 + THRESHOLD_MARGIN)

    delta = epochs_required * per_epoch_m * factor
    return ThresholdPolicy(
        delta_threshold=delta,
        epochs_required=epochs_required,
        k=k,
        p_design=p,
        per_epoch_increase=per_epoch_m,
        delta_normalized=delta * k / per_epoch_m,
    )
