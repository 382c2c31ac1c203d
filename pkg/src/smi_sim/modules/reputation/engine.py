# src/smi_sim/modules/reputation/engine.py
"""
Per-(observer, peer) reputation ledgers.

Score R = γ·f1 + δ·f2 where f1 is an exponentially weighted average of the
per-epoch interaction score m = w_u·m1 + w_t·m2 and f2 counts verifier proofs.
Ledgers are immutable: every operation returns a new ledger.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from smi_sim.config import (
    PROOF_UNIT,
    REVOCATION_FRACTION,
    SCORE_RELATIVE_TOLERANCE,
    TRUSTED_UNIQUENESS_WINDOW_S,
)
from smi_sim.domain.models import (
    BindingStatus,
    IdentityProof,
    LocationReport,
    PrincipalIdentity,
    PrincipalKind,
)
from smi_sim.modules.crypto.primitives import verify
from smi_sim.modules.reputation.threshold import ThresholdPolicy
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)


class Weights(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    w_untrusted: float
    w_trusted: float
    gamma: float
    delta: float
    proof_unit: float = PROOF_UNIT

    @model_validator(mode="after")
    def _constraints(self) -> "Weights":
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0.5, 1), got {self.alpha}")
        if not self.w_trusted > self.w_untrusted > 1:
            raise ValueError("weights must satisfy w_trusted > w_untrusted > 1")
        if not self.delta > self.gamma > 0:
            raise ValueError("weights must satisfy delta > gamma > 0")
        if self.proof_unit <= 0:
            raise ValueError("proof_unit must be positive")
        return self

    def scaled(self, factor: float) -> "Weights":
        """Scale γ and δ together; the ordering δ > γ is preserved."""
        return Weights(
            alpha=self.alpha,
            w_untrusted=self.w_untrusted,
            w_trusted=self.w_trusted,
            gamma=self.gamma * factor,
            delta=self.delta * factor,
            proof_unit=self.proof_unit,
        )


@dataclass(frozen=True, slots=True)
class ReputationLedger:
    observer: PrincipalIdentity
    peer: PrincipalIdentity
    f1_value: float = 0.0
    f2_proofs: int = 0
    epoch_index: int = 0
    m1_current: int = 0
    m2_current: int = 0
    # (trusted endpoint id, time it was last counted)
    trusted_seen: Tuple[Tuple[str, int], ...] = ()
    m_history: Tuple[float, ...] = ()
    last_update: Optional[int] = None
    last_activity_at: Optional[int] = None
    peak_score: float = 0.0

    @property
    def has_live_counters(self) -> bool:
        return self.m1_current > 0 or self.m2_current > 0


def new_ledger(observer: PrincipalIdentity, peer: PrincipalIdentity) -> ReputationLedger:
    return ReputationLedger(observer=observer, peer=peer)


def reset_ledger(ledger: ReputationLedger) -> ReputationLedger:
    """Zero every counter, used when the peer's identity is in conflict."""
    return ReputationLedger(observer=ledger.observer, peer=ledger.peer)


def record_interaction(
    ledger: ReputationLedger,
    location: LocationReport,
    now: int,
    uniqueness_window_s: int = TRUSTED_UNIQUENESS_WINDOW_S,
    per_epoch: bool = False,
) -> ReputationLedger:
    """Count one verified interaction.

    A trusted location earns m2 only when its endpoint has not been counted
    within the uniqueness window (or in this epoch, when per_epoch is set).
    Anything else counts towards m1.
    """
    if ledger.last_update is not None and now < ledger.last_update:
        raise ValueError(f"interaction at {now} precedes last update {ledger.last_update}")

    if location.is_trusted and location.issuer is not None:
        endpoint = location.issuer.device_id
        if per_epoch:
            seen = ledger.trusted_seen
        else:
            seen = tuple(e for e in ledger.trusted_seen if now - e[1] < uniqueness_window_s)
        if all(e[0] != endpoint for e in seen):
            return replace(
                ledger,
                m2_current=ledger.m2_current + 1,
                trusted_seen=seen + ((endpoint, now),),
                last_update=now,
                last_activity_at=now,
            )
        ledger = replace(ledger, trusted_seen=seen)

    return replace(
        ledger, m1_current=ledger.m1_current + 1, last_update=now, last_activity_at=now
    )


def epoch_interaction_score(ledger: ReputationLedger, weights: Weights) -> float:
    return weights.w_untrusted * ledger.m1_current + weights.w_trusted * ledger.m2_current


def close_epoch(
    ledger: ReputationLedger,
    weights: Weights,
    now: Optional[int] = None,
    discard: bool = False,
    per_epoch_uniqueness: bool = False,
) -> ReputationLedger:
    """Fold the live counters into f1 and start a new epoch.

    With discard set the counters are dropped and f1 is left as it was.
    """
    seen = () if per_epoch_uniqueness else ledger.trusted_seen
    if discard:
        return replace(
            ledger,
            m1_current=0,
            m2_current=0,
            trusted_seen=seen,
            last_update=now if now is not None else ledger.last_update,
        )

    m = epoch_interaction_score(ledger, weights)
    f1 = weights.alpha * m + (1.0 - weights.alpha) * ledger.f1_value
    closed = replace(
        ledger,
        f1_value=f1,
        epoch_index=ledger.epoch_index + 1,
        m1_current=0,
        m2_current=0,
        trusted_seen=seen,
        m_history=ledger.m_history + (m,),
        last_update=now if now is not None else ledger.last_update,
    )
    return replace(closed, peak_score=max(closed.peak_score, committed_score(closed, weights)))


def add_identity_proof(
    ledger: ReputationLedger,
    verifier: PrincipalIdentity,
    now: int,
    proof: Optional[IdentityProof] = None,
    verifier_key: Optional[bytes] = None,
) -> ReputationLedger:
    """Credit one verifier proof. Invalid proofs leave the ledger unchanged."""
    if verifier.kind is not PrincipalKind.third_party_verifier:
        logger.warning(f"Ignoring identity proof from non-verifier {verifier}")
        return ledger
    if proof is not None:
        if verifier_key is None or proof.verifier != verifier or proof.subject != ledger.peer:
            logger.warning(f"Ignoring identity proof for {proof.subject} from {verifier}")
            return ledger
        if not verify(verifier_key, proof.payload(), proof.signature):
            logger.warning(f"Ignoring identity proof with bad signature from {verifier}")
            return ledger
    return replace(
        ledger, f2_proofs=ledger.f2_proofs + 1, last_update=now, last_activity_at=now
    )


def committed_score(ledger: ReputationLedger, weights: Weights) -> float:
    return weights.gamma * ledger.f1_value + weights.delta * ledger.f2_proofs * weights.proof_unit


def track_peak(ledger: ReputationLedger, weights: Weights) -> ReputationLedger:
    current = committed_score(ledger, weights)
    if current <= ledger.peak_score:
        return ledger
    return replace(ledger, peak_score=current)


def score(ledger: ReputationLedger, weights: Weights, now: Optional[int] = None) -> float:
    """Current score including the epoch in progress.

    The live f1 is the better of the committed value and the recursion applied
    to the counters so far, so the score never drops inside an epoch and equals
    the committed score at epoch boundaries.
    """
    live = weights.alpha * epoch_interaction_score(ledger, weights) + (
        1.0 - weights.alpha
    ) * ledger.f1_value
    f1 = max(ledger.f1_value, live)
    return weights.gamma * f1 + weights.delta * ledger.f2_proofs * weights.proof_unit


def closed_form_score(
    m_history: Sequence[float], f2_proofs: int, weights: Weights
) -> float:
    n = len(m_history)
    x = 0.0
    if n:
        exponents = np.arange(n - 1, -1, -1, dtype=float)
        decay = np.power(1.0 - weights.alpha, exponents)
        x = weights.gamma * weights.alpha * math.fsum(decay * np.asarray(m_history, dtype=float))
    y = weights.delta * f2_proofs * weights.proof_unit
    return x + y


def is_authenticated(
    ledger: ReputationLedger,
    policy: ThresholdPolicy,
    binding_status: Optional[BindingStatus],
    weights: Weights,
    now: Optional[int] = None,
    liveness_horizon_s: Optional[int] = None,
) -> bool:
    if binding_status is not BindingStatus.active:
        return False
    if liveness_horizon_s is not None and now is not None:
        if ledger.last_activity_at is None or now - ledger.last_activity_at > liveness_horizon_s:
            return False
    current = score(ledger, weights, now)
    return current >= policy.delta_threshold * (1.0 - SCORE_RELATIVE_TOLERANCE)


def revocation_eligible(
    ledger: ReputationLedger,
    policy: ThresholdPolicy,
    weights: Weights,
    fraction: float = REVOCATION_FRACTION,
) -> bool:
    """Peer once reached the threshold but its committed score fell below fraction·Δ."""
    reached = ledger.peak_score >= policy.delta_threshold * (1.0 - SCORE_RELATIVE_TOLERANCE)
    return reached and committed_score(ledger, weights) < fraction * policy.delta_threshold


def apply_idle_decay(
    ledger: ReputationLedger,
    weights: Weights,
    now: int,
    epoch_length_s: int,
    idle_epochs: int,
) -> ReputationLedger:
    """Close one empty epoch if the peer has been silent for idle_epochs epochs."""
    if ledger.last_activity_at is None:
        return ledger
    if now - ledger.last_activity_at < idle_epochs * epoch_length_s:
        return ledger
    return close_epoch(ledger, weights, now=now)


def per_epoch_increase(weights: Weights, k: int, epochs_required: int) -> float:
    """Average committed-score gain per epoch over the first L fully successful epochs."""
    m = weights.w_untrusted * k
    f1 = 0.0
    for _ in range(epochs_required):
        f1 = weights.alpha * m + (1.0 - weights.alpha) * f1
    return weights.gamma * f1 / epochs_required


def calibrate_weights(
    weights: Weights, k: int, epochs_required: int, target_increase: float
) -> Weights:
    """Scale γ and δ so that per_epoch_increase equals target_increase."""
    current = per_epoch_increase(weights, k, epochs_required)
    if current <= 0:
        raise ValueError("cannot calibrate weights with zero per-epoch increase")
    return weights.scaled(target_increase / current)
