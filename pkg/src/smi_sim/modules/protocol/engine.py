# src/smi_sim/modules/protocol/engine.py
"""
Per-principal epoch state machine.

Dialing (three messages) agrees on the secret parameters a and b. The
connection phase then runs k exchanges, each an initiator link followed by a
participant link in one interleaved signature chain. Every inconsistency
aborts the epoch; aborts never touch reputation. Completion emits an
IncreaseRep effect carrying the verified interactions, and the initiator
closes the epoch with a signed end tag.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np

from smi_sim.core.exceptions import (
    CryptoError,
    EpochRefusedError,
    MessageFormatError,
    ProtocolError,
    SealError,
)
from smi_sim.domain.models import (
    ChannelKind,
    EpochPhase,
    EpochRole,
    LocationReport,
    MessageVariant,
    PrincipalIdentity,
    ProbeKind,
)
from smi_sim.domain.schemas import ProtocolConfig
from smi_sim.modules.crypto.chain import (
    ChainGenesis,
    ChainLink,
    SignatureChainState,
    chain_extend,
    link_payload,
    verify_interleaved_chain,
)
from smi_sim.modules.crypto.primitives import (
    KeyPair,
    Nonce,
    encode_fields,
    encode_int,
    decode_int,
    make_nonce,
    seal,
    sign,
    verify,
)
from smi_sim.modules.identity.store import (
    ConflictRecord,
    KeyBindingStore,
    active_binding,
    identity_for_device,
    register_binding,
)
from smi_sim.modules.protocol.channels import plan_channels
from smi_sim.modules.protocol.messages import (
    ProtocolMessage,
    dialing_2_statement,
    dialing_3_statement,
    end_tag_statement,
    open_fields,
    parse_statement,
    statement_fields,
)
from smi_sim.modules.protocol.trusted_location import verify_trusted_report
from smi_sim.utils.logging import get_logger, log_epoch_outcome

logger = get_logger(__name__)

# Tolerated clock skew between the sealed time and local receive time
CLOCK_SKEW_S = 120


@dataclass(frozen=True, slots=True)
class ProbeSlot:
    time: int
    kind: ProbeKind


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    location: LocationReport
    time: int
    credible: bool

    @property
    def trusted(self) -> bool:
        return self.location.is_trusted


# --- Effects ---


@dataclass(frozen=True, slots=True)
class IncreaseRep:
    observer: PrincipalIdentity
    peer: PrincipalIdentity
    epoch_index: int
    interactions: Tuple[InteractionRecord, ...]
    completed_at: int


@dataclass(frozen=True, slots=True)
class EpochAborted:
    owner: PrincipalIdentity
    peer: PrincipalIdentity
    epoch_index: int
    role: EpochRole
    reason: str
    at: int


@dataclass(frozen=True, slots=True)
class AuditNote:
    action: str
    peer_device: str
    detail: str
    at: int


@dataclass(frozen=True, slots=True)
class KeyConflictDetected:
    record: ConflictRecord


Effect = Union[IncreaseRep, EpochAborted, AuditNote, KeyConflictDetected]


@dataclass
class EpochState:
    peer: PrincipalIdentity
    peer_key: bytes
    role: EpochRole
    epoch_index: int
    k: int
    started_at: int
    deadline: int
    my_param: Nonce
    phase: EpochPhase = EpochPhase.dialing
    peer_param: Optional[Nonce] = None
    genesis: Optional[ChainGenesis] = None
    last_signature: bytes = b""
    last_index: int = 0
    links: List[ChainLink] = field(default_factory=list)
    exchanges_done: int = 0
    awaiting_response: bool = False
    probe_schedule: Tuple[ProbeSlot, ...] = ()
    interactions: List[InteractionRecord] = field(default_factory=list)
    pending_interaction: Optional[InteractionRecord] = None
    end_tag_sent: bool = False
    end_tag_received: bool = False
    last_activity: int = 0
    abort_reason: Optional[str] = None
    channel_plan: Tuple[ChannelKind, ...] = (ChannelKind.sms,)

    @property
    def is_open(self) -> bool:
        return self.phase in (EpochPhase.dialing, EpochPhase.connection)

    @property
    def my_chain(self) -> SignatureChainState:
        return SignatureChainState(self.last_signature, self.last_index, self.my_param)

    @property
    def peer_chain(self) -> Optional[SignatureChainState]:
        if self.peer_param is None:
            return None
        return SignatureChainState(self.last_signature, self.last_index, self.peer_param)


@dataclass
class HandleResult:
    state: Optional[EpochState] = None
    outbound: List[ProtocolMessage] = field(default_factory=list)
    effects: List[Effect] = field(default_factory=list)


def build_probe_schedule(
    start: int,
    k: int,
    interval_s: int,
    grace_s: int,
    jitter: float,
    rng: np.random.Generator,
) -> Tuple[ProbeSlot, ...]:
    """Alternate periodic and jittered (aperiodic) slots, one per interval."""
    slots = []
    for j in range(1, k + 1):
        base = start + grace_s + (j - 1) * interval_s
        if j % 2 == 1 or jitter <= 0:
            slots.append(ProbeSlot(base, ProbeKind.periodic))
        else:
            offset = int(rng.integers(1, max(2, int(jitter * interval_s))))
            slots.append(ProbeSlot(base + offset, ProbeKind.aperiodic))
    return tuple(slots)


def _param_digest(param: bytes) -> bytes:
    return hashlib.blake2b(param, digest_size=16).digest()


class ProtocolEngine:
    """Protocol endpoint of one principal; holds one EpochState per peer."""

    def __init__(
        self,
        identity: PrincipalIdentity,
        keypair: KeyPair,
        store: KeyBindingStore,
        config: ProtocolConfig,
        rng: np.random.Generator,
        root_public_key: Optional[bytes] = None,
        nonce_bytes: int = 128,
    ):
        self.identity = identity
        self.keypair = keypair
        self.store = store
        self.config = config
        self.rng = rng
        self.root_public_key = root_public_key
        self.nonce_bytes = nonce_bytes
        self.epochs: Dict[str, EpochState] = {}
        self.epoch_counters: Dict[str, int] = {}
        self.consumed_params: Set[bytes] = set()

    # --- epoch lifecycle ---

    def can_start(self, peer: PrincipalIdentity) -> bool:
        previous = self.epochs.get(peer.device_id)
        if previous is None or previous.phase is EpochPhase.aborted:
            return True
        if previous.phase is EpochPhase.completed:
            return previous.role is not EpochRole.initiator or previous.end_tag_sent
        return False

    def start_epoch(
        self, peer: PrincipalIdentity, now: int, location: LocationReport
    ) -> Tuple[EpochState, ProtocolMessage]:
        peer_key = active_binding(self.store, peer)
        if peer_key is None:
            raise ProtocolError(f"no active key for {peer}")
        if not self.can_start(peer):
            raise EpochRefusedError(f"epoch with {peer} still open")

        index = self.epoch_counters.get(peer.device_id, 0) + 1
        self.epoch_counters[peer.device_id] = index
        a = make_nonce(self.rng, self.nonce_bytes)
        self.consumed_params.add(_param_digest(a.value))
        cfg = self.config
        state = EpochState(
            peer=peer,
            peer_key=peer_key,
            role=EpochRole.initiator,
            epoch_index=index,
            k=cfg.k,
            started_at=now,
            deadline=now + cfg.epoch_length_s,
            my_param=a,
            probe_schedule=build_probe_schedule(
                now, cfg.k, cfg.exchange_interval_s, cfg.dialing_grace_s, cfg.aperiodic_jitter, self.rng
            ),
            last_activity=now,
            channel_plan=tuple(cfg.channels),
        )
        self.epochs[peer.device_id] = state

        location = self._usable(location, now)
        body = encode_fields(
            *statement_fields(location, now, self.identity), a.value, self.keypair.public_key
        )
        message = self._message(state, MessageVariant.dialing_1, 1, body)
        return state, message

    def next_exchange(self, peer: PrincipalIdentity, now: int, location: LocationReport) -> HandleResult:
        """Initiator side of exchange j, fired at the j-th probe slot."""
        state = self.epochs.get(peer.device_id)
        if state is None or state.role is not EpochRole.initiator or not state.is_open:
            return HandleResult(state=state)
        if state.phase is EpochPhase.dialing:
            return self.abort_epoch(peer, now, "dialing incomplete at first probe slot")
        if state.awaiting_response:
            return self.abort_epoch(peer, now, "previous exchange unanswered")
        if state.exchanges_done >= state.k:
            return HandleResult(state=state)

        location = self._usable(location, now)
        extended = chain_extend(state.my_chain, self.keypair.private_key, location, now)
        self._append_link(state, extended, location, now)
        state.awaiting_response = True
        message = self._conn_message(state, MessageVariant.conn_initiator, location, now)
        return HandleResult(state=state, outbound=[message])

    def complete_epoch(self, state: EpochState, now: int) -> HandleResult:
        state.phase = EpochPhase.completed
        state.last_activity = now
        effects: List[Effect] = [
            IncreaseRep(
                observer=self.identity,
                peer=state.peer,
                epoch_index=state.epoch_index,
                interactions=tuple(state.interactions),
                completed_at=now,
            )
        ]
        outbound = []
        if state.role is EpochRole.initiator:
            tag = sign(self.keypair.private_key, end_tag_statement(state.epoch_index, state.last_signature))
            body = encode_fields(encode_int(state.epoch_index), state.last_signature)
            outbound.append(
                self._message(state, MessageVariant.epoch_end_tag, state.last_index + 1, body, tag)
            )
            state.end_tag_sent = True
        log_epoch_outcome(logger, self.identity.device_id, state.peer.device_id, state.epoch_index, "completed")
        return HandleResult(state=state, outbound=outbound, effects=effects)

    def abort_epoch(self, peer: PrincipalIdentity, now: int, reason: str) -> HandleResult:
        state = self.epochs.get(peer.device_id)
        if state is None or not state.is_open:
            return HandleResult(state=state)
        state.phase = EpochPhase.aborted
        state.abort_reason = reason
        state.awaiting_response = False
        log_epoch_outcome(logger, self.identity.device_id, peer.device_id, state.epoch_index, "aborted", reason)
        return HandleResult(
            state=state,
            effects=[EpochAborted(self.identity, state.peer, state.epoch_index, state.role, reason, now)],
        )

    def expire(self, now: int) -> List[Effect]:
        effects: List[Effect] = []
        for state in list(self.epochs.values()):
            if state.is_open and now > state.deadline:
                effects.extend(self.abort_epoch(state.peer, now, "epoch deadline passed").effects)
        return effects

    # --- inbound ---

    def handle_message(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        sender = identity_for_device(self.store, message.sender.device_id)
        if sender is None or sender != message.sender or active_binding(self.store, sender) is None:
            logger.debug(f"Dropping {message.variant.value} from unknown {message.sender}")
            return HandleResult(
                state=self.epochs.get(message.sender.device_id),
                effects=[AuditNote("drop_unknown_sender", message.sender.device_id, message.variant.value, now)],
            )

        handlers = {
            MessageVariant.dialing_1: self._on_dialing_1,
            MessageVariant.dialing_2: self._on_dialing_2,
            MessageVariant.dialing_3: self._on_dialing_3,
            MessageVariant.conn_initiator: self._on_conn_initiator,
            MessageVariant.conn_participant: self._on_conn_participant,
            MessageVariant.epoch_end_tag: self._on_end_tag,
        }
        handler = handlers.get(message.variant)
        if handler is None:
            return self._reject(message, now, f"unexpected variant {message.variant.value}")
        try:
            return handler(message, now, my_location)
        except SealError:
            return self._reject(message, now, "envelope could not be opened")
        except (MessageFormatError, CryptoError) as exc:
            return self._reject(message, now, f"malformed message: {exc}")

    def _on_dialing_1(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        fields = open_fields(self.keypair, message)
        statement = parse_statement(fields[:4])
        a, offered_key = fields[4], fields[5]
        if not statement.matches(message.sender):
            return self._reject(message, now, "sealed identity does not match sender")

        conflict = register_binding(self.store, message.sender, offered_key, now)
        if isinstance(conflict, ConflictRecord):
            outcome = self._reject(message, now, "conflicting key for sender")
            outcome.effects.append(KeyConflictDetected(conflict))
            return outcome
        if statement.time < now - self.config.freshness_window_s:
            return self._reject(message, now, "stale dialing request")
        digest = _param_digest(a)
        if digest in self.consumed_params:
            return self._reject(message, now, "replayed dialing parameter")

        yielded: List[Effect] = []
        existing = self.epochs.get(message.sender.device_id)
        if existing is not None and existing.is_open:
            if existing.role is EpochRole.initiator and existing.phase is EpochPhase.dialing:
                # Simultaneous start: the lower device id keeps the initiator role
                if self.identity.device_id < message.sender.device_id:
                    return HandleResult(
                        state=existing,
                        effects=[AuditNote("refuse_simultaneous_start", message.sender.device_id, "", now)],
                    )
                yielded = self.abort_epoch(message.sender, now, "yielded initiator role").effects
            else:
                return self._reject(message, now, "dialing request while epoch open")

        self.consumed_params.add(digest)
        b = make_nonce(self.rng, self.nonce_bytes)
        self.consumed_params.add(_param_digest(b.value))
        state = EpochState(
            peer=message.sender,
            peer_key=offered_key,
            role=EpochRole.participant,
            epoch_index=message.epoch_index,
            k=self.config.k,
            started_at=now,
            deadline=now + self.config.epoch_length_s + self.config.exchange_interval_s,
            my_param=b,
            peer_param=Nonce(a),
            last_activity=now,
            channel_plan=tuple(self.config.channels),
        )
        self.epochs[message.sender.device_id] = state
        self.epoch_counters[message.sender.device_id] = max(
            self.epoch_counters.get(message.sender.device_id, 0), message.epoch_index
        )

        location = self._usable(my_location, now)
        body = encode_fields(*statement_fields(location, now, self.identity), b.value, a)
        reply = self._message(
            state, MessageVariant.dialing_2, 2, body, sign(self.keypair.private_key, dialing_2_statement(Nonce(a)))
        )
        return HandleResult(state=state, outbound=[reply], effects=yielded)

    def _on_dialing_2(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        state = self._open_state(message, EpochRole.initiator, EpochPhase.dialing)
        if state is None:
            return self._reject(message, now, "no dialing epoch awaiting Dialing2")
        fields = open_fields(self.keypair, message)
        statement = parse_statement(fields[:4])
        b, echoed_a = fields[4], fields[5]
        if not statement.matches(message.sender):
            return self._reject(message, now, "sealed identity does not match sender")
        if echoed_a != state.my_param.value:
            return self._reject(message, now, "dialing parameter mismatch")
        if not verify(state.peer_key, dialing_2_statement(state.my_param), message.clear_signature):
            return self._reject(message, now, "bad Dialing2 signature")

        state.peer_param = Nonce(b)
        s3 = sign(self.keypair.private_key, dialing_3_statement(state.peer_param, state.my_param))
        state.genesis = ChainGenesis(s3)
        state.last_signature = s3
        state.last_index = state.genesis.index
        state.phase = EpochPhase.connection
        state.last_activity = now
        reply = self._message(state, MessageVariant.dialing_3, 3, encode_fields(b), s3)
        return HandleResult(state=state, outbound=[reply])

    def _on_dialing_3(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        state = self._open_state(message, EpochRole.participant, EpochPhase.dialing)
        if state is None:
            return self._reject(message, now, "no dialing epoch awaiting Dialing3")
        fields = open_fields(self.keypair, message)
        if fields[0] != state.my_param.value:
            return self._reject(message, now, "dialing parameter mismatch")
        if not verify(
            state.peer_key, dialing_3_statement(state.my_param, state.peer_param), message.clear_signature
        ):
            return self._reject(message, now, "bad Dialing3 signature")
        state.genesis = ChainGenesis(message.clear_signature)
        state.last_signature = message.clear_signature
        state.last_index = state.genesis.index
        state.phase = EpochPhase.connection
        state.last_activity = now
        return HandleResult(state=state)

    def _on_conn_initiator(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        state = self._open_state(message, EpochRole.participant, EpochPhase.connection)
        if state is None:
            return self._reject(message, now, "no connection epoch for initiator link")
        link = self._verified_link(state, message, now)
        if isinstance(link, str):
            return self._reject(message, now, link)
        record, signature = link

        # An initiator link chained over our previous link confirms that exchange
        if state.pending_interaction is not None:
            state.interactions.append(state.pending_interaction)
            state.exchanges_done += 1
        if state.exchanges_done >= state.k:
            return self._reject(message, now, "more exchanges than configured")
        self._append_link(
            state, SignatureChainState(signature, state.last_index + 1, state.peer_param), record.location, record.time
        )
        state.pending_interaction = record

        location = self._usable(my_location, now)
        extended = chain_extend(state.my_chain, self.keypair.private_key, location, now)
        self._append_link(state, extended, location, now)
        reply = self._conn_message(state, MessageVariant.conn_participant, location, now)
        return HandleResult(state=state, outbound=[reply])

    def _on_conn_participant(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        state = self._open_state(message, EpochRole.initiator, EpochPhase.connection)
        if state is None or not state.awaiting_response:
            return self._reject(message, now, "unsolicited participant link")
        link = self._verified_link(state, message, now)
        if isinstance(link, str):
            return self._reject(message, now, link)
        record, signature = link
        self._append_link(
            state, SignatureChainState(signature, state.last_index + 1, state.peer_param), record.location, record.time
        )
        state.awaiting_response = False
        state.interactions.append(record)
        state.exchanges_done += 1
        if state.exchanges_done == state.k:
            return self.complete_epoch(state, now)
        return HandleResult(state=state)

    def _on_end_tag(self, message: ProtocolMessage, now: int, my_location: LocationReport) -> HandleResult:
        state = self._open_state(message, EpochRole.participant, EpochPhase.connection)
        if state is None:
            return self._reject(message, now, "end tag without open epoch")
        if message.sequence != state.last_index + 1 or state.pending_interaction is None:
            return self._reject(message, now, "out-of-order end tag")
        if state.exchanges_done + 1 != state.k:
            return self._reject(message, now, "end tag before all exchanges")
        fields = open_fields(self.keypair, message)
        if decode_int(fields[0]) != state.epoch_index or fields[1] != state.last_signature:
            return self._reject(message, now, "end tag does not cover the chain")
        if not verify(
            state.peer_key, end_tag_statement(state.epoch_index, state.last_signature), message.clear_signature
        ):
            return self._reject(message, now, "bad end tag signature")
        state.interactions.append(state.pending_interaction)
        state.pending_interaction = None
        state.exchanges_done += 1
        state.end_tag_received = True
        return self.complete_epoch(state, now)

    # --- helpers ---

    def _open_state(
        self, message: ProtocolMessage, role: EpochRole, phase: EpochPhase
    ) -> Optional[EpochState]:
        state = self.epochs.get(message.sender.device_id)
        if state is None or state.role is not role or state.phase is not phase:
            return None
        if state.epoch_index != message.epoch_index:
            return None
        return state

    def _verified_link(
        self, state: EpochState, message: ProtocolMessage, now: int
    ) -> Union[str, Tuple[InteractionRecord, bytes]]:
        """Return (interaction, signature) for a valid peer link, else the reason it is not."""
        expected_index = state.last_index + 1
        if message.sequence != expected_index:
            return f"out-of-order link {message.sequence}, expected {expected_index}"
        fields = open_fields(self.keypair, message)
        statement = parse_statement(fields[:4])
        signature = fields[4]
        if not statement.matches(message.sender) or signature != message.clear_signature:
            return "sealed link does not match clear signature"
        if statement.time > now + CLOCK_SKEW_S or statement.time < state.started_at - CLOCK_SKEW_S:
            return "link time outside the epoch"
        payload = link_payload(state.peer_param, state.last_signature, statement.location, statement.time)
        if not verify(state.peer_key, payload, signature):
            return "bad link signature"

        location = statement.location
        credible = state.role is EpochRole.initiator or self.config.initiator_location_credible
        if location.is_trusted:
            if not verify_trusted_report(
                location,
                self.root_public_key,
                holder_device=message.sender.device_id,
                strong=self.config.strong_trusted_location,
            ):
                if self.root_public_key is None:
                    location = location.as_untrusted()
                else:
                    return "trusted location failed verification"
            elif not location.usable_at(statement.time):
                location = location.as_untrusted()
            else:
                credible = True
        state.last_activity = now
        return InteractionRecord(location, statement.time, credible), signature

    def _append_link(
        self, state: EpochState, extended: SignatureChainState, location: LocationReport, time: int
    ) -> None:
        state.links.append(ChainLink(extended.index, extended.last_signature, location, time))
        state.last_signature = extended.last_signature
        state.last_index = extended.index

    def _usable(self, location: LocationReport, now: int) -> LocationReport:
        if location.is_trusted and not location.usable_at(now):
            return location.as_untrusted()
        return location

    def _conn_message(
        self, state: EpochState, variant: MessageVariant, location: LocationReport, now: int
    ) -> ProtocolMessage:
        body = encode_fields(*statement_fields(location, now, self.identity), state.last_signature)
        return self._message(state, variant, state.last_index, body, state.last_signature)

    def _message(
        self,
        state: EpochState,
        variant: MessageVariant,
        sequence: int,
        body: bytes,
        clear_signature: bytes = b"",
    ) -> ProtocolMessage:
        message = ProtocolMessage(
            variant=variant,
            sender=self.identity,
            recipient=state.peer,
            epoch_index=state.epoch_index,
            sequence=sequence,
            envelope=seal(state.peer_key, body, self.rng),
            clear_signature=clear_signature,
        )
        return message.with_plan(plan_channels(message, state.channel_plan))

    def _reject(self, message: ProtocolMessage, now: int, reason: str) -> HandleResult:
        """Abort the open epoch with the sender, or drop the message when there is none."""
        state = self.epochs.get(message.sender.device_id)
        if state is not None and state.is_open:
            return self.abort_epoch(message.sender, now, reason)
        logger.debug(f"Dropping {message.variant.value} from {message.sender}: {reason}")
        return HandleResult(
            state=state,
            effects=[AuditNote("drop_inconsistent", message.sender.device_id, reason, now)],
        )


def verify_epoch_transcript(
    state: EpochState, own_public_key: bytes
) -> bool:
    """Re-check the whole interleaved chain of a finished epoch."""
    if state.genesis is None or state.peer_param is None:
        return False
    if state.role is EpochRole.initiator:
        initiator_key, participant_key = own_public_key, state.peer_key
        a, b = state.my_param, state.peer_param
    else:
        initiator_key, participant_key = state.peer_key, own_public_key
        a, b = state.peer_param, state.my_param
    return verify_interleaved_chain(state.genesis, state.links, initiator_key, participant_key, a, b)
