# src/smi_sim/domain/schemas.py
import hashlib
from typing import Dict, List, Literal, Optional, Tuple

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from smi_sim import config as defaults
from smi_sim.domain.models import ChannelKind, MobilityModel


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# --- Run configuration sections ---


class CryptoConfig(_Section):
    security_bits: int = defaults.SECURITY_BITS
    nonce_bytes: int = Field(defaults.NONCE_BYTES, ge=16)


class ProtocolConfig(_Section):
    k: int = Field(defaults.EXCHANGES_PER_EPOCH, ge=1)
    epoch_length_s: int = Field(defaults.EPOCH_LENGTH_S, gt=0)
    exchange_interval_s: int = Field(defaults.EXCHANGE_INTERVAL_S, gt=0)
    dialing_grace_s: int = Field(defaults.DIALING_GRACE_S, ge=0)
    aperiodic_jitter: float = Field(defaults.APERIODIC_JITTER_FRACTION, ge=0.0, lt=1.0)
    max_retries: int = Field(defaults.MAX_RETRIES, ge=0)
    retry_base_delay_s: float = Field(defaults.RETRY_BASE_DELAY_S, gt=0)
    restart_delay_s: int = Field(defaults.RESTART_DELAY_S, gt=0)
    freshness_window_s: int = Field(defaults.DIALING_FRESHNESS_S, gt=0)
    trusted_ttl_s: int = Field(defaults.TRUSTED_LOCATION_TTL_S, gt=0)
    strong_trusted_location: bool = False
    # When false the participant treats the initiator's self-declared locations as non-credible
    initiator_location_credible: bool = False
    channels: List[ChannelKind] = Field(default_factory=lambda: [ChannelKind.sms])

    @field_validator("channels")
    @classmethod
    def _sms_required(cls, value: List[ChannelKind]) -> List[ChannelKind]:
        if ChannelKind.sms not in value:
            raise ValueError("the SMS channel is mandatory")
        return value

    @model_validator(mode="after")
    def _schedule_fits_epoch(self) -> "ProtocolConfig":
        span = self.dialing_grace_s + self.k * self.exchange_interval_s
        if span > self.epoch_length_s:
            raise ValueError(
                f"k={self.k} exchanges every {self.exchange_interval_s}s do not fit "
                f"in an epoch of {self.epoch_length_s}s"
            )
        return self


class ReputationConfig(_Section):
    alpha: float = defaults.ALPHA
    w_untrusted: float = defaults.W_UNTRUSTED
    w_trusted: float = defaults.W_TRUSTED
    gamma: float = defaults.GAMMA
    delta: float = defaults.DELTA
    proof_unit: float = Field(defaults.PROOF_UNIT, gt=0)
    epochs_required: int = Field(defaults.EPOCHS_REQUIRED, ge=1)
    per_epoch_target: float = Field(defaults.PER_EPOCH_TARGET, gt=0)
    p_design: float = Field(defaults.P_DESIGN, ge=0.0, lt=1.0)
    calibrate: bool = True
    threshold_override: Optional[float] = Field(None, gt=0)
    uniqueness_window_s: int = Field(defaults.TRUSTED_UNIQUENESS_WINDOW_S, gt=0)
    uniqueness_mode: Literal["window", "epoch"] = "window"
    revocation_fraction: float = Field(defaults.REVOCATION_FRACTION, gt=0.0, lt=1.0)
    liveness_epochs: int = Field(defaults.LIVENESS_EPOCHS, ge=1)
    decay_after_idle_epochs: int = Field(defaults.DECAY_AFTER_IDLE_EPOCHS, ge=1)
    inactivity_fraction: float = Field(defaults.INACTIVITY_FRACTION, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _weights_valid(self) -> "ReputationConfig":
        # Raises on any weight constraint violation
        self.weights()
        return self

    def weights(self):
        from smi_sim.modules.reputation.engine import Weights

        return Weights(
            alpha=self.alpha,
            w_untrusted=self.w_untrusted,
            w_trusted=self.w_trusted,
            gamma=self.gamma,
            delta=self.delta,
            proof_unit=self.proof_unit,
        )


class SchedulerConfig(_Section):
    quota_per_period: int = Field(1_000_000, gt=0)
    quota_period_s: int = Field(defaults.EPOCH_LENGTH_S, gt=0)
    overrun_allowance: float = Field(defaults.QUOTA_OVERRUN_ALLOWANCE, ge=0.0)
    batch_size: int = Field(defaults.BATCH_SIZE, ge=1)
    priority_cycle_s: int = Field(defaults.EPOCH_LENGTH_S, gt=0)
    default_priority: int = Field(5, ge=1, le=defaults.PRIORITY_LEVELS)
    backoff_enabled: bool = False
    backoff_decrease: float = Field(defaults.BACKOFF_DECREASE, gt=0.0, lt=1.0)
    backoff_increase: float = Field(defaults.BACKOFF_INCREASE, gt=0.0, le=1.0)
    backoff_delay_threshold_s: float = Field(defaults.BACKOFF_DELAY_THRESHOLD_S, gt=0.0)


class IdentityConfig(_Section):
    # Revoke a key at the provider once any observer's score for it decays below the revocation level
    revoke_on_decay: bool = True
    # Node index -> simulated second at which its owner revokes the key
    owner_revocations: Dict[int, int] = Field(default_factory=dict)

    @field_validator("owner_revocations")
    @classmethod
    def _non_negative(cls, value: Dict[int, int]) -> Dict[int, int]:
        if any(node < 0 or at < 0 for node, at in value.items()):
            raise ValueError("owner revocations need non-negative node indices and times")
        return value


class SiteConfig(_Section):
    x: float
    y: float
    radius_m: float = Field(gt=0)
    p_intercept: float = Field(ge=0.0, le=1.0)
    always_on: bool = True
    active_hours: Tuple[int, int] = (9, 17)


class AdversaryConfig(_Section):
    # Per-user tailing fBTS, applied to every mobile subject when > 0
    p_intercept: float = Field(0.0, ge=0.0, lt=1.0)
    follow_limit: Optional[int] = Field(None, ge=1)
    sites: List[SiteConfig] = Field(default_factory=list)
    # Static sites on a checkerboard of half the zones
    checkerboard_p: Optional[float] = Field(None, ge=0.0, le=1.0)
    sender_side: bool = False
    ambient_loss: float = Field(0.0, ge=0.0, lt=1.0)
    mode: Literal["jam", "intercept"] = "jam"
    # Intercept mode only: replay each captured message to its recipient this long after capture
    replay_delay_s: Optional[float] = Field(None, ge=0.0)
    # Cellular channels the fBTS sits on; proximity links are out of its reach
    channels: List[ChannelKind] = Field(default_factory=lambda: [ChannelKind.sms])

    @field_validator("channels")
    @classmethod
    def _cellular_only(cls, value: List[ChannelKind]) -> List[ChannelKind]:
        if any(not c.is_cellular for c in value):
            raise ValueError("an fBTS can only intercept cellular channels (sms, data)")
        return value


class WorldConfig(_Section):
    grid_side_m: float = Field(defaults.GRID_SIDE_M, gt=0)
    zone_side_m: float = Field(defaults.ZONE_SIDE_M, gt=0)
    mobility_step_s: int = Field(defaults.MOBILITY_STEP_S, gt=0)
    mean_speed_mps: float = Field(defaults.MEAN_SPEED_MPS, ge=0)
    model: MobilityModel = MobilityModel.composite
    # Round-robin per-node assignment overriding `model` when non-empty
    model_mix: List[MobilityModel] = Field(default_factory=list)
    turn_probability: float = Field(defaults.PROB_WALK_TURN_PROBABILITY, ge=0.0, le=1.0)
    manhattan_turn_probability: float = Field(defaults.MANHATTAN_TURN_PROBABILITY, ge=0.0, le=1.0)
    block_m: float = Field(defaults.MANHATTAN_BLOCK_M, gt=0)
    downtown_zones: List[int] = Field(default_factory=list)
    downtown_dwell_target: float = Field(defaults.DOWNTOWN_DWELL_TARGET, gt=0.0, lt=1.0)
    downtown_speed_factor: float = Field(defaults.DOWNTOWN_SPEED_FACTOR, gt=0.0, le=1.0)
    composite_allow_home_daytime: bool = True
    # Share of the area within proximity range of a trusted endpoint (1/12 in the growth study)
    trusted_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    trusted_distribution: Literal["uniform", "poisson"] = "uniform"
    proximity_radius_m: float = Field(defaults.PROXIMITY_RADIUS_M, gt=0)

    @model_validator(mode="after")
    def _zones_tile_grid(self) -> "WorldConfig":
        ratio = self.grid_side_m / self.zone_side_m
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("grid side must be a whole multiple of the zone side")
        return self

    @property
    def zones_per_side(self) -> int:
        return int(round(self.grid_side_m / self.zone_side_m))


class NetworkConfig(_Section):
    sms_delay_per_segment_s: float = Field(defaults.SMS_DELAY_PER_SEGMENT_S, ge=0)
    data_delay_s: float = Field(defaults.DATA_DELAY_S, ge=0)
    proximity_delay_s: float = Field(defaults.PROXIMITY_DELAY_S, ge=0)
    max_events_per_sim_second: int = Field(defaults.MAX_EVENTS_PER_SIM_SECOND, gt=0)


class VerifierConfig(_Section):
    enabled: bool = False
    probe_interval_s: int = Field(600, gt=0)
    # Also run the same scenario without the verifier and report both
    compare_without: bool = False


class TopologyConfig(_Section):
    kind: Literal["pairs", "star", "cloud"] = "pairs"
    contacts_per_initiator: int = Field(4, ge=1)
    cloud_probes_per_epoch: int = Field(defaults.EXCHANGES_PER_EPOCH, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    name: str = "custom"
    description: str = ""
    seed: int = 1
    node_count: int = Field(100, ge=2)
    duration_days: float = Field(30.0, gt=0)
    stop_when_converged: bool = True
    trace: bool = False

    crypto: CryptoConfig = Field(default_factory=CryptoConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    reputation: ReputationConfig = Field(default_factory=ReputationConfig)
    identity: IdentityConfig = Field(default_factory=IdentityConfig)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    world: WorldConfig = Field(default_factory=WorldConfig)
    adversary: AdversaryConfig = Field(default_factory=AdversaryConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    verifier: VerifierConfig = Field(default_factory=VerifierConfig)
    topology: TopologyConfig = Field(default_factory=TopologyConfig)

    @model_validator(mode="after")
    def _revoked_nodes_exist(self) -> "RunConfig":
        unknown = sorted(n for n in self.identity.owner_revocations if n >= self.node_count)
        if unknown:
            raise ValueError(f"owner revocations name nodes {unknown} beyond node_count={self.node_count}")
        return self

    @property
    def duration_s(self) -> int:
        return int(round(self.duration_days * self.protocol.epoch_length_s))

    def canonical_json(self, include_seed: bool = False) -> bytes:
        data = self.model_dump(mode="json")
        if not include_seed:
            data.pop("seed", None)
        return orjson.dumps(data, option=orjson.OPT_SORT_KEYS)

    def config_hash(self) -> str:
        """Hash of everything except the seed, so trials of one preset share it."""
        return hashlib.sha256(self.canonical_json()).hexdigest()[:16]


# --- Result schemas ---


class NodeResult(BaseModel):
    node_id: str
    role: str
    model: str
    converged: bool
    convergence_time_s: Optional[float] = None
    noe: int = 0
    epochs_completed: int = 0
    epochs_aborted: int = 0
    priority: Optional[int] = None
    batch: Optional[int] = None

    @property
    def convergence_hours(self) -> Optional[float]:
        if self.convergence_time_s is None:
            return None
        return self.convergence_time_s / 3600.0


class MessageCounts(BaseModel):
    sent: int = 0
    delivered: int = 0
    intercepted: int = 0
    failed: int = 0
    replayed: int = 0
    sms_segments: int = 0


class RunSummary(BaseModel):
    name: str
    version: str
    seed: int
    config_hash: str
    node_count: int
    subject_count: int
    converged_count: int
    threshold: float
    per_epoch_increase: float
    sim_end_s: float
    mean_convergence_hours: Optional[float] = None
    mean_convergence_hours_censored: Optional[float] = None
    noe_mean: float = 0.0
    noe_by_model: Dict[str, float] = Field(default_factory=dict)
    lambda_: float = Field(0.0, alias="lambda")
    epochs_completed: int = 0
    epochs_aborted: int = 0
    messages: MessageCounts = Field(default_factory=MessageCounts)
    nodes: List[NodeResult] = Field(default_factory=list)

    model_config = ConfigDict(populate_by_name=True)


class TranscriptRecord(BaseModel):
    time: float
    variant: str
    sender: str
    recipient: str
    epoch_index: int
    sequence: int
    channels: List[str]
    sms_segments: int
    outcome: str
    attempt: int = 0


class ScoreSample(BaseModel):
    observer_id: str
    peer_id: str
    sim_time_s: float
    score: float
    f1: float
    f2: float
    epoch_index: int
