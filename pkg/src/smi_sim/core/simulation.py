# src/smi_sim/core/simulation.py
"""
Actor layer of the simulator.

Builds the world, the principals and their protocol engines for one
RunConfig, then drives them from the event loop: mobility ticks, epoch
starts, exchange slots, message delivery, retransmission, cloud and verifier
probes, and epoch boundaries (idle decay, cloud epoch closing, scheduler
rounds). Reputation is accounted when an epoch completes; aborts never touch
a ledger.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from smi_sim import __version__
from smi_sim.core.exceptions import (
    ProtocolError,
    QuotaExceededError,
)
from smi_sim.core.simnet import Attempt, EventKind, EventLoop, SimEvent, Transport
from smi_sim.domain.models import (
    BindingStatus,
    DeliveryOutcome,
    EpochRole,
    LocationReport,
    MessageVariant,
    PrincipalIdentity,
    PrincipalKind,
)
from smi_sim.domain.schemas import (
    NodeResult,
    RunConfig,
    RunSummary,
    ScoreSample,
    TranscriptRecord,
)
from smi_sim.modules.crypto.primitives import KeyPair, generate_keypair
from smi_sim.modules.identity.store import (
    KeyBindingStore,
    RevocationNotice,
    binding_status,
    register_binding,
    revoke_key,
)
from smi_sim.modules.protocol.cloud import (
    cloud_probe_cycle,
    issue_identity_proof,
    plan_probe_times,
)
from smi_sim.modules.protocol.engine import (
    AuditNote,
    EpochAborted,
    HandleResult,
    IncreaseRep,
    InteractionRecord,
    KeyConflictDetected,
    ProtocolEngine,
)
from smi_sim.modules.protocol.messages import ProtocolMessage
from smi_sim.modules.protocol.trusted_location import trusted_location_handshake
from smi_sim.modules.reputation.engine import (
    ReputationLedger,
    Weights,
    add_identity_proof,
    apply_idle_decay,
    close_epoch,
    is_authenticated,
    new_ledger,
    record_interaction,
    reset_ledger,
    revocation_eligible,
    score,
    track_peak,
)
from smi_sim.modules.reputation.threshold import ThresholdPolicy
from smi_sim.modules.scheduler.engine import (
    BackoffState,
    ContactEntry,
    QuotaState,
    apply_backoff,
    assign_batches,
    build_active_list,
    estimate_epoch_cost,
    new_quota,
    record_send,
    roll_quota,
    suggest_priority,
)
from smi_sim.modules.world.adversary import build_field
from smi_sim.modules.world.grid import Grid, trusted_counts_for
from smi_sim.modules.world.mobility import (
    NodeState,
    init_node,
    params_from_config,
    round_robin_models,
    step_node,
)
from smi_sim.utils.auditing import AuditTrail, log_audit_event
from smi_sim.utils.logging import bind_sim_clock, get_logger

logger = get_logger(__name__)

PairKey = Tuple[str, str]


@dataclass
class SimNode:
    identity: PrincipalIdentity
    keys: KeyPair
    store: KeyBindingStore
    engine: ProtocolEngine
    mobility: NodeState
    rng_mobility: np.random.Generator
    rng_net: np.random.Generator
    rng_misc: np.random.Generator
    trusted_report: Optional[LocationReport] = None
    contacts: List[ContactEntry] = field(default_factory=list)
    quota: Optional[QuotaState] = None
    backoff: BackoffState = field(default_factory=BackoffState)
    lost_this_period: bool = False
    worst_delay_this_period: float = 0.0
    epochs_completed: int = 0
    epochs_aborted: int = 0

    @property
    def device_id(self) -> str:
        return self.identity.device_id

    @property
    def position(self) -> Tuple[float, float]:
        return self.mobility.position


@dataclass
class SimulationResult:
    summary: RunSummary
    samples: List[ScoreSample]
    transcript: List[TranscriptRecord]
    audit: AuditTrail


@dataclass(frozen=True, slots=True)
class _Timer:
    tag: str
    owner: str
    peer: str = ""
    epoch_index: int = 0
    token: int = 0


class Simulation:
    def __init__(self, config: RunConfig, weights: Weights, policy: ThresholdPolicy):
        self.config = config
        self.weights = weights
        self.policy = policy
        self.audit = AuditTrail()
        self.loop = EventLoop(config.network.max_events_per_sim_second)
        self.end_s = float(config.duration_s)

        proto, world = config.protocol, config.world
        seeds = np.random.SeedSequence(config.seed)
        world_seq, actors_seq, nodes_seq = seeds.spawn(3)
        world_rng = np.random.default_rng(world_seq)

        counts = trusted_counts_for(
            world.trusted_fraction,
            world.zones_per_side ** 2,
            world.zone_side_m,
            world.proximity_radius_m,
            world.trusted_distribution,
            world_rng,
        )
        self.grid = Grid(
            world.grid_side_m, world.zone_side_m, config.seed, counts, world.proximity_radius_m
        )
        self.has_trusted = bool(counts.sum() > 0)
        self.mobility_params = params_from_config(world)

        # --- principals ---
        models = round_robin_models(config.node_count, world.model_mix, world.model)
        self.nodes: Dict[str, SimNode] = {}
        self.order: List[str] = []
        for i, node_seq in enumerate(nodes_seq.spawn(config.node_count)):
            keys_seq, proto_seq, mob_seq, net_seq, misc_seq = node_seq.spawn(5)
            identity = PrincipalIdentity(user_id=f"user-{i:04d}", device_id=f"dev-{i:04d}")
            keys = generate_keypair(np.random.default_rng(keys_seq), 0, config.crypto.security_bits)
            store = KeyBindingStore(owner=identity)
            rng_mobility = np.random.default_rng(mob_seq)
            engine = ProtocolEngine(
                identity,
                keys,
                store,
                proto,
                np.random.default_rng(proto_seq),
                root_public_key=self.grid.root_keys.public_key,
                nonce_bytes=config.crypto.nonce_bytes,
            )
            mobility = init_node(
                identity.device_id,
                models[i],
                rng_mobility,
                self.mobility_params,
                speed_mps=world.mean_speed_mps,
                seed=int(world_rng.integers(0, 2 ** 31)),
            )
            self.nodes[identity.device_id] = SimNode(
                identity=identity,
                keys=keys,
                store=store,
                engine=engine,
                mobility=mobility,
                rng_mobility=rng_mobility,
                rng_net=np.random.default_rng(net_seq),
                rng_misc=np.random.default_rng(misc_seq),
            )
            self.order.append(identity.device_id)

        provider_seq, verifier_seq, cloud_seq = actors_seq.spawn(3)
        self.provider = PrincipalIdentity("provider", "cloud-0", PrincipalKind.cloud_provider)
        self.provider_keys = generate_keypair(np.random.default_rng(provider_seq))
        self.verifier = PrincipalIdentity("verifier", "verifier-0", PrincipalKind.third_party_verifier)
        self.verifier_keys = generate_keypair(np.random.default_rng(verifier_seq))
        self.cloud_rng = np.random.default_rng(cloud_seq)
        self.provider_position = (world.grid_side_m / 2.0, world.grid_side_m / 2.0)
        self.provider_store = KeyBindingStore(owner=self.provider)
        for device in self.order:
            peer = self.nodes[device]
            register_binding(self.provider_store, peer.identity, peer.keys.public_key, 0)

        self.adversary = build_field(self.grid, config.adversary, subjects=self.order)
        self.transport = Transport(
            config=config.network,
            adversary=self.adversary,
            locate=self._locate,
            rng_for=self._rng_for,
            max_retries=proto.max_retries,
            retry_base_delay_s=proto.retry_base_delay_s,
            proximity_radius_m=world.proximity_radius_m,
            sender_side=config.adversary.sender_side,
            keep_intercepted=config.adversary.mode == "intercept",
            replay_delay_s=config.adversary.replay_delay_s,
            trace=config.trace,
        )

        # --- reputation bookkeeping ---
        self.ledgers: Dict[PairKey, ReputationLedger] = {}
        self.exchange_counts: Dict[PairKey, int] = {}
        self.observers: Dict[str, Set[str]] = {d: set() for d in self.order}
        self.converged: Dict[str, Tuple[float, int]] = {}
        self.samples: List[ScoreSample] = []
        self.revocation_flagged: Set[PairKey] = set()
        self.revoked: Set[str] = set()
        self.start_tokens: Dict[PairKey, int] = {}
        self.boost: Dict[PairKey, bool] = {}
        self.scheduled_pairs: List[PairKey] = []
        self.subjects: List[str] = list(self.order)

        self._register_handlers()
        self._build_topology()

    # --- setup ---

    def _register_handlers(self) -> None:
        self.loop.register_handler(EventKind.mobility_tick, self._on_mobility_tick)
        self.loop.register_handler(EventKind.epoch_boundary, self._on_epoch_boundary)
        self.loop.register_handler(EventKind.timer, self._on_timer)
        self.loop.register_handler(EventKind.deliver, self._on_deliver)
        self.loop.register_handler(EventKind.retry, self._on_retry)
        self.loop.register_handler(EventKind.undeliverable, self._on_undeliverable)
        self.loop.register_handler(EventKind.revocation, self._on_revocation)

    def _provision(self, a: str, b: str) -> None:
        """Exchange contact keys out of band, as the provider's registration does."""
        na, nb = self.nodes[a], self.nodes[b]
        register_binding(na.store, nb.identity, nb.keys.public_key, 0)
        register_binding(nb.store, na.identity, na.keys.public_key, 0)
        self.observers[a].add(b)
        self.observers[b].add(a)

    def _build_topology(self) -> None:
        topology = self.config.topology
        n = len(self.order)
        if topology.kind == "pairs":
            for i in range(0, n - 1, 2):
                self.scheduled_pairs.append((self.order[i], self.order[i + 1]))
            if n % 2 == 1:
                self.scheduled_pairs.append((self.order[-1], self.order[0]))
            for initiator, participant in self.scheduled_pairs:
                self._provision(initiator, participant)
        elif topology.kind == "star":
            fanout = min(topology.contacts_per_initiator, max(1, (n - 1) // 2))
            for i, device in enumerate(self.order):
                node = self.nodes[device]
                peers = [self.nodes[self.order[(i + j) % n]].identity for j in range(1, fanout + 1)]
                batches = assign_batches(peers, self.config.scheduler.batch_size)
                for peer, batch in zip(peers, batches):
                    frequency = float(node.rng_misc.uniform(0.5, 24.0))
                    node.contacts.append(
                        ContactEntry(peer, suggest_priority(frequency), batch, frequency)
                    )
                    self._provision(device, peer.device_id)
                sched = self.config.scheduler
                node.quota = new_quota(sched.quota_per_period, sched.quota_period_s, 0, sched.overrun_allowance)
                node.backoff = BackoffState(
                    decrease=sched.backoff_decrease, increase=sched.backoff_increase
                )
        else:
            for device in self.order:
                register_binding(self.nodes[device].store, self.provider, self.provider_keys.public_key, 0)
                self.observers[device] = {self.provider.device_id}

    def _schedule_initial(self) -> None:
        self.loop.schedule(0.0, EventKind.mobility_tick)
        self.loop.schedule(0.0, EventKind.epoch_boundary, 0)
        if self.config.topology.kind == "pairs":
            for index, (initiator, participant) in enumerate(self.scheduled_pairs):
                self._schedule_start(initiator, participant, float(index % 60))
        if self.config.verifier.enabled:
            for device in self.subjects:
                self.loop.schedule(
                    float(self.config.verifier.probe_interval_s), EventKind.timer, _Timer("verify", device)
                )
        for index, at in sorted(self.config.identity.owner_revocations.items()):
            if at <= self.end_s:
                self.loop.schedule(float(at), EventKind.timer, _Timer("revoke", self.order[index]))

    # --- public ---

    def run(self) -> SimulationResult:
        self._schedule_initial()
        with bind_sim_clock(lambda: self.loop.now):
            self.loop.run_until(self.end_s)
        return SimulationResult(
            summary=self.summary(),
            samples=self.samples,
            transcript=self.transport.transcript,
            audit=self.audit,
        )

    # --- lookups ---

    def _locate(self, device_id: str) -> Tuple[float, float]:
        node = self.nodes.get(device_id)
        if node is None:
            return self.provider_position
        return node.position

    def _rng_for(self, device_id: str) -> np.random.Generator:
        node = self.nodes.get(device_id)
        return node.rng_net if node is not None else self.cloud_rng

    def _location(self, node: SimNode, now: int) -> LocationReport:
        report = node.trusted_report
        if report is not None and report.usable_at(now):
            return report
        return LocationReport(position=node.position, time=now)

    @property
    def _now(self) -> int:
        return int(math.floor(self.loop.now))

    # --- handlers ---

    def _on_mobility_tick(self, event: SimEvent) -> None:
        dt = self.config.world.mobility_step_s
        now = self._now
        for device in self.order:
            node = self.nodes[device]
            node.mobility = step_node(node.mobility, dt, node.rng_mobility, self.mobility_params, now)
            if self.has_trusted:
                self._visit_trusted(node, now)
        if self.loop.now + dt <= self.end_s:
            self.loop.schedule_in(dt, EventKind.mobility_tick)

    def _visit_trusted(self, node: SimNode, now: int) -> None:
        endpoint = self.grid.nearest_trusted(node.position)
        if endpoint is None:
            return
        current = node.trusted_report
        if current is not None and current.usable_at(now) and current.issuer == endpoint.identity:
            return
        proto = self.config.protocol
        try:
            result = trusted_location_handshake(
                endpoint,
                node.identity,
                node.keys,
                node.position,
                now,
                node.rng_misc,
                self.grid.root_keys.public_key,
                ttl=proto.trusted_ttl_s,
                proximity_radius_m=self.config.world.proximity_radius_m,
                strong=proto.strong_trusted_location,
                nonce_bytes=self.config.crypto.nonce_bytes,
            )
        except ProtocolError as exc:
            logger.debug(f"Trusted handshake {node.device_id} at {endpoint.identity} failed: {exc}")
            return
        node.trusted_report = result.report

    def _on_epoch_boundary(self, event: SimEvent) -> None:
        index = int(event.payload)
        now = self._now
        epoch_length = self.config.protocol.epoch_length_s
        if index > 0:
            self._decay_ledgers(now)
            if self.config.topology.kind == "cloud":
                self._close_cloud_epochs(now)
        if self.config.topology.kind == "cloud":
            self._plan_cloud_probes(now)
        if self.config.topology.kind == "star":
            self._scheduler_round(now)
        for node in self.nodes.values():
            self._apply(node, node.engine.expire(now))
        if self.loop.now + epoch_length <= self.end_s:
            self.loop.schedule_in(epoch_length, EventKind.epoch_boundary, index + 1)

    def _on_timer(self, event: SimEvent) -> None:
        timer: _Timer = event.payload
        now = self._now
        if timer.tag == "verify":
            self._verifier_probe(timer.owner, now)
            return
        if timer.tag == "probe":
            self._cloud_probe(timer.owner, now)
            return
        if timer.tag == "revoke":
            self._revoke(timer.owner, now, "revoked by owner")
            return

        node = self.nodes[timer.owner]
        peer = self.nodes[timer.peer].identity
        if timer.tag == "start":
            if self.start_tokens.get((timer.owner, timer.peer)) == timer.token:
                self._start_epoch(node, peer, now)
        elif timer.tag == "exchange":
            state = node.engine.epochs.get(timer.peer)
            if state is not None and state.epoch_index == timer.epoch_index:
                result = node.engine.next_exchange(peer, now, self._location(node, now))
                self._handle_result(node, result)
        elif timer.tag == "expire":
            self._apply(node, node.engine.expire(now))

    def _on_deliver(self, event: SimEvent) -> None:
        message: ProtocolMessage = event.payload
        node = self.nodes.get(message.recipient.device_id)
        if node is None:
            return
        now = self._now
        result = node.engine.handle_message(message, now, self._location(node, now))
        state = result.state
        if (
            message.variant is MessageVariant.dialing_1
            and state is not None
            and state.role is EpochRole.participant
            and state.is_open
            and state.started_at == now
        ):
            self.loop.schedule(
                float(state.deadline + 1), EventKind.timer, _Timer("expire", node.device_id, message.sender.device_id)
            )
        self._handle_result(node, result)

    def _on_retry(self, event: SimEvent) -> None:
        attempt: Attempt = event.payload
        message = attempt.message
        sender = self.nodes.get(message.sender.device_id)
        if sender is None:
            return
        state = sender.engine.epochs.get(message.recipient.device_id)
        if state is None or state.epoch_index != message.epoch_index:
            return
        if not state.is_open and message.variant is not MessageVariant.epoch_end_tag:
            return
        self._dispatch(sender, message, attempt.attempt)

    def _on_undeliverable(self, event: SimEvent) -> None:
        message: ProtocolMessage = event.payload
        sender = self.nodes.get(message.sender.device_id)
        if sender is None:
            return
        sender.lost_this_period = True
        state = sender.engine.epochs.get(message.recipient.device_id)
        if state is None or state.epoch_index != message.epoch_index:
            return
        result = sender.engine.abort_epoch(message.recipient, self._now, "undeliverable after retries")
        self._handle_result(sender, result)

    # --- epoch driving ---

    def _schedule_start(self, owner: str, peer: str, at: float) -> None:
        if at > self.end_s:
            return
        key = (owner, peer)
        token = self.start_tokens.get(key, 0) + 1
        self.start_tokens[key] = token
        self.loop.schedule(max(at, self.loop.now), EventKind.timer, _Timer("start", owner, peer, 0, token))

    def _start_epoch(self, node: SimNode, peer: PrincipalIdentity, now: int) -> None:
        if node.device_id in self.revoked:
            log_audit_event(self.audit, now, node.device_id, "epoch_refused", peer.device_id, "own key revoked")
            return
        engine = node.engine
        previous = engine.epochs.get(peer.device_id)
        if previous is not None and previous.is_open:
            self._handle_result(node, engine.abort_epoch(peer, now, "superseded by next epoch"))
        try:
            state, message = engine.start_epoch(peer, now, self._location(node, now))
        except ProtocolError as exc:
            log_audit_event(self.audit, now, node.device_id, "epoch_refused", peer.device_id, str(exc))
            return
        # A started epoch cancels restarts queued by the one it replaced
        key = (node.device_id, peer.device_id)
        self.start_tokens[key] = self.start_tokens.get(key, 0) + 1
        for j, slot in enumerate(state.probe_schedule, start=1):
            self.loop.schedule(
                float(slot.time), EventKind.timer, _Timer("exchange", node.device_id, peer.device_id, state.epoch_index, j)
            )
        self.loop.schedule(
            float(state.deadline + 1), EventKind.timer, _Timer("expire", node.device_id, peer.device_id)
        )
        self._dispatch(node, message)

    def _dispatch(self, node: SimNode, message: ProtocolMessage, attempt: int = 0) -> None:
        if node.quota is not None:
            try:
                node.quota = record_send(node.quota, message.sms_segments)
            except QuotaExceededError as exc:
                log_audit_event(self.audit, self.loop.now, node.device_id, "quota_exhausted", message.recipient.device_id, str(exc))
                self._handle_result(node, node.engine.abort_epoch(message.recipient, self._now, "quota hard cap reached"))
                return
        result = self.transport.dispatch(self.loop, message, attempt)
        if result.outcome is not DeliveryOutcome.delivered:
            node.lost_this_period = True
        else:
            # Failed attempts before this one each waited a transit time plus their retry delay
            waited = sum(result.delay_s + self.transport.retry_delay(i) for i in range(attempt))
            node.worst_delay_this_period = max(node.worst_delay_this_period, waited + result.delay_s)

    def _handle_result(self, node: SimNode, result: HandleResult) -> None:
        for message in result.outbound:
            self._dispatch(node, message)
        self._apply(node, result.effects)

    def _apply(self, node: SimNode, effects) -> None:
        now = self._now
        for effect in effects:
            if isinstance(effect, IncreaseRep):
                node.epochs_completed += 1
                self._account(node, effect)
                state = node.engine.epochs.get(effect.peer.device_id)
                if (
                    self.config.topology.kind == "pairs"
                    and state is not None
                    and state.role is EpochRole.initiator
                ):
                    self._schedule_start(
                        node.device_id,
                        effect.peer.device_id,
                        float(state.started_at + self.config.protocol.epoch_length_s),
                    )
            elif isinstance(effect, EpochAborted):
                node.epochs_aborted += 1
                if effect.role is EpochRole.initiator:
                    self._schedule_start(
                        node.device_id, effect.peer.device_id, float(now + self.config.protocol.restart_delay_s)
                    )
            elif isinstance(effect, AuditNote):
                log_audit_event(self.audit, effect.at, node.device_id, effect.action, effect.peer_device, effect.detail)
            elif isinstance(effect, KeyConflictDetected):
                peer = effect.record.identity.device_id
                log_audit_event(
                    self.audit, now, node.device_id, "key_conflict", peer, "identity unauthenticatable", warn=True
                )
                key = (node.device_id, peer)
                if key in self.ledgers:
                    self.ledgers[key] = reset_ledger(self.ledgers[key])

    # --- reputation ---

    def _ledger(self, observer: PrincipalIdentity, peer: PrincipalIdentity) -> ReputationLedger:
        key = (observer.device_id, peer.device_id)
        ledger = self.ledgers.get(key)
        if ledger is None:
            ledger = new_ledger(observer, peer)
        return ledger

    def _record(self, ledger: ReputationLedger, record: InteractionRecord, boost: bool) -> ReputationLedger:
        rep = self.config.reputation
        location = record.location if boost else record.location.as_untrusted()
        at = record.time if ledger.last_update is None else max(record.time, ledger.last_update)
        return record_interaction(ledger, location, at, rep.uniqueness_window_s, rep.uniqueness_mode == "epoch")

    def _account(self, node: SimNode, effect: IncreaseRep) -> None:
        key = (node.device_id, effect.peer.device_id)
        ledger = self._ledger(node.identity, effect.peer)
        boost = self.boost.get(key, True)
        for record in effect.interactions:
            ledger = self._record(ledger, record, boost)
        ledger = close_epoch(
            ledger,
            self.weights,
            now=max(effect.completed_at, ledger.last_update or 0),
            per_epoch_uniqueness=self.config.reputation.uniqueness_mode == "epoch",
        )
        self.ledgers[key] = ledger
        self.exchange_counts[key] = self.exchange_counts.get(key, 0) + len(effect.interactions)
        self._after_update(node.store, key, ledger, effect.completed_at)

    def _after_update(self, store: KeyBindingStore, key: PairKey, ledger: ReputationLedger, now: float) -> None:
        current = score(ledger, self.weights, int(now))
        self.samples.append(
            ScoreSample(
                observer_id=key[0],
                peer_id=key[1],
                sim_time_s=float(now),
                score=current,
                f1=ledger.f1_value,
                f2=ledger.f2_proofs * self.weights.proof_unit,
                epoch_index=ledger.epoch_index,
            )
        )
        subject = key[1]
        if subject in self.converged or subject not in self.observers:
            return
        horizon = self.config.reputation.liveness_epochs * self.config.protocol.epoch_length_s
        status = binding_status(store, ledger.peer)
        if is_authenticated(ledger, self.policy, status, self.weights, int(now), horizon):
            self.converged[subject] = (float(now), self.exchange_counts.get(key, 0))
            logger.debug(f"🎯 {subject} authenticated by {key[0]} at t={now:.0f}s")
            if self.config.stop_when_converged and len(self.converged) == len(self.subjects):
                self.loop.stop()

    def _decay_ledgers(self, now: int) -> None:
        rep = self.config.reputation
        identity_config = self.config.identity
        epoch_length = self.config.protocol.epoch_length_s
        for key in sorted(self.ledgers):
            if key[0] == self.provider.device_id:
                continue
            ledger = self.ledgers[key]
            decayed = apply_idle_decay(ledger, self.weights, now, epoch_length, rep.decay_after_idle_epochs)
            if decayed is not ledger:
                self.ledgers[key] = decayed
            if key not in self.revocation_flagged and revocation_eligible(
                decayed, self.policy, self.weights, rep.revocation_fraction
            ):
                self.revocation_flagged.add(key)
                log_audit_event(
                    self.audit, now, key[0], "revocation_eligible", key[1], "score decayed below revocation level", warn=True
                )
                if identity_config.revoke_on_decay:
                    self._revoke(key[1], now, "reputation decayed below revocation level")

    # --- revocation ---

    def _reputation_holders(self, device: str, now: int) -> List[PrincipalIdentity]:
        """Every principal whose ledger gives device a positive score."""
        holders = []
        for (observer_id, subject), ledger in sorted(self.ledgers.items()):
            if subject != device or observer_id not in self.nodes:
                continue
            if score(ledger, self.weights, now) > 0.0:
                holders.append(self.nodes[observer_id].identity)
        return holders

    def _revoke(self, device: str, now: int, reason: str) -> None:
        """Revoke device's key at the provider and broadcast one notice per reputation holder."""
        identity = self.nodes[device].identity
        if binding_status(self.provider_store, identity) is not BindingStatus.active:
            return
        notices = revoke_key(self.provider_store, identity, now, self._reputation_holders(device, now), reason)
        self.revoked.add(device)
        provider_key = (self.provider.device_id, device)
        if provider_key in self.ledgers:
            self.ledgers[provider_key] = reset_ledger(self.ledgers[provider_key])
        log_audit_event(
            self.audit, now, self.provider.device_id, "key_revoked", device, reason, {"notified": len(notices)}, warn=True
        )
        # The broadcast travels as a single-segment SMS
        delay = self.config.network.sms_delay_per_segment_s
        for notice in notices:
            self.loop.schedule_in(delay, EventKind.revocation, notice)

    def _on_revocation(self, event: SimEvent) -> None:
        notice: RevocationNotice = event.payload
        node = self.nodes.get(notice.recipient.device_id)
        if node is None:
            return
        now = self._now
        subject = notice.identity
        if binding_status(node.store, subject) is BindingStatus.active:
            revoke_key(node.store, subject, now, reason=notice.reason)
        state = node.engine.epochs.get(subject.device_id)
        if state is not None and state.is_open:
            self._handle_result(node, node.engine.abort_epoch(subject, now, "peer key revoked"))
        key = (node.device_id, subject.device_id)
        if key in self.ledgers:
            self.ledgers[key] = reset_ledger(self.ledgers[key])
        log_audit_event(self.audit, now, node.device_id, "revocation_received", subject.device_id, notice.reason)

    # --- cloud provider and verifier ---

    def _plan_cloud_probes(self, now: int) -> None:
        proto = self.config.protocol
        for device in self.subjects:
            if device in self.converged and self.config.stop_when_converged:
                continue
            slots = plan_probe_times(
                now, proto.epoch_length_s, self.config.topology.cloud_probes_per_epoch, self.cloud_rng
            )
            for slot in slots:
                if slot.time <= self.end_s:
                    self.loop.schedule(float(slot.time), EventKind.timer, _Timer("probe", device))

    def _probe_deliver(self, message: ProtocolMessage) -> Optional[float]:
        result = self.transport.send(message, self.loop.now)
        if result.outcome is DeliveryOutcome.delivered:
            return result.delay_s
        return None

    def _cloud_probe(self, device: str, now: int) -> None:
        node = self.nodes[device]
        transcript = cloud_probe_cycle(
            self.provider,
            self.provider_keys,
            node.identity,
            node.keys,
            now,
            self.cloud_rng,
            LocationReport(position=self.provider_position, time=now),
            self._location(node, now),
            timeout_s=self.config.protocol.exchange_interval_s,
            deliver=self._probe_deliver,
        )
        if not transcript.outcome.success:
            return
        key = (self.provider.device_id, device)
        ledger = self._ledger(self.provider, node.identity)
        record = InteractionRecord(transcript.outcome.location, now, True)
        ledger = self._record(ledger, record, True)
        self.ledgers[key] = ledger
        self.exchange_counts[key] = self.exchange_counts.get(key, 0) + 1
        self._after_update(self.provider_store, key, ledger, now)

    def _close_cloud_epochs(self, now: int) -> None:
        rep = self.config.reputation
        expected = self.config.topology.cloud_probes_per_epoch
        for key in sorted(self.ledgers):
            if key[0] != self.provider.device_id:
                continue
            ledger = self.ledgers[key]
            answered = ledger.m1_current + ledger.m2_current
            # Devices that missed more than the inactivity share of probes get nothing for the epoch
            inactive = answered < rep.inactivity_fraction * expected
            self.ledgers[key] = close_epoch(
                ledger,
                self.weights,
                now=max(now, ledger.last_update or 0),
                discard=inactive,
                per_epoch_uniqueness=rep.uniqueness_mode == "epoch",
            )

    def _verifier_probe(self, device: str, now: int) -> None:
        if device in self.converged:
            return
        node = self.nodes[device]
        transcript = cloud_probe_cycle(
            self.verifier,
            self.verifier_keys,
            node.identity,
            node.keys,
            now,
            self.cloud_rng,
            LocationReport(position=self.provider_position, time=now),
            self._location(node, now),
            timeout_s=self.config.verifier.probe_interval_s,
            deliver=self._probe_deliver,
        )
        if transcript.outcome.success:
            proof = issue_identity_proof(self.verifier, self.verifier_keys, node.identity, node.keys.public_key, now)
            for observer_id in sorted(self.observers[device]):
                observer = self.nodes.get(observer_id)
                observer_identity = observer.identity if observer is not None else self.provider
                key = (observer_id, device)
                ledger = self._ledger(observer_identity, node.identity)
                ledger = add_identity_proof(ledger, self.verifier, now, proof, self.verifier_keys.public_key)
                ledger = track_peak(ledger, self.weights)
                self.ledgers[key] = ledger
                store = observer.store if observer is not None else self.provider_store
                self._after_update(store, key, ledger, now)
        next_at = self.loop.now + self.config.verifier.probe_interval_s
        if next_at <= self.end_s and device not in self.converged:
            self.loop.schedule(next_at, EventKind.timer, _Timer("verify", device))

    # --- scheduler ---

    def _scheduler_round(self, now: int) -> None:
        sched = self.config.scheduler
        cost = estimate_epoch_cost(self.config.protocol.k)
        for device in self.order:
            node = self.nodes[device]
            if node.quota is None:
                continue
            node.quota = roll_quota(node.quota, now)
            if sched.backoff_enabled and now > 0:
                node.backoff = apply_backoff(
                    node.backoff, node.worst_delay_this_period, node.lost_this_period, sched.backoff_delay_threshold_s
                )
            node.lost_this_period = False
            node.worst_delay_this_period = 0.0
            active = build_active_list(
                node.contacts,
                node.quota,
                now,
                cost,
                sched.priority_cycle_s,
                node.backoff if sched.backoff_enabled else None,
            )
            for contact in node.contacts:
                self.boost[(device, contact.peer.device_id)] = False
            for offset, entry in enumerate(active):
                peer = entry.contact.peer.device_id
                self.boost[(device, peer)] = entry.trusted_boost
                if node.engine.can_start(entry.contact.peer):
                    self._schedule_start(device, peer, float(now + offset))

    # --- results ---

    def summary(self) -> RunSummary:
        nodes: List[NodeResult] = []
        contacts_by_peer: Dict[str, ContactEntry] = {}
        for node in self.nodes.values():
            for contact in node.contacts:
                contacts_by_peer.setdefault(contact.peer.device_id, contact)

        for device in self.subjects:
            node = self.nodes[device]
            hit = self.converged.get(device)
            contact = contacts_by_peer.get(device)
            role = "participant"
            if any(pair[0] == device for pair in self.scheduled_pairs) or node.contacts:
                role = "initiator"
            nodes.append(
                NodeResult(
                    node_id=device,
                    role=role,
                    model=node.mobility.model.value,
                    converged=hit is not None,
                    convergence_time_s=hit[0] if hit else None,
                    noe=hit[1] if hit else 0,
                    epochs_completed=node.epochs_completed,
                    epochs_aborted=node.epochs_aborted,
                    priority=contact.priority if contact else None,
                    batch=contact.batch if contact else None,
                )
            )

        done = [n for n in nodes if n.converged]
        sim_end = float(self.loop.now)
        mean_hours = None
        censored = None
        noe_mean = 0.0
        by_model: Dict[str, float] = {}
        if done:
            mean_hours = float(np.mean([n.convergence_time_s for n in done])) / 3600.0
            noe_mean = float(np.mean([n.noe for n in done]))
            for model in sorted({n.model for n in done}):
                by_model[model] = float(np.mean([n.noe for n in done if n.model == model]))
        if nodes:
            censored = float(
                np.mean([n.convergence_time_s if n.converged else self.end_s for n in nodes])
            ) / 3600.0

        return RunSummary(
            name=self.config.name,
            version=__version__,
            seed=self.config.seed,
            config_hash=self.config.config_hash(),
            node_count=self.config.node_count,
            subject_count=len(nodes),
            converged_count=len(done),
            threshold=self.policy.delta_threshold,
            per_epoch_increase=self.policy.per_epoch_increase,
            sim_end_s=sim_end,
            mean_convergence_hours=mean_hours,
            mean_convergence_hours_censored=censored,
            noe_mean=noe_mean,
            noe_by_model=by_model,
            lambda_=1.0 - len(done) / len(nodes) if nodes else 0.0,
            epochs_completed=sum(n.epochs_completed for n in self.nodes.values()),
            epochs_aborted=sum(n.epochs_aborted for n in self.nodes.values()),
            messages=self.transport.counts.model_copy(),
            nodes=nodes,
        )
