"""Exhaustive small-epoch traces: loss, tampering, replay and injection never yield reputation."""

import itertools
from dataclasses import replace

import numpy as np
import pytest

from smi_sim.domain.models import LocationReport, MessageVariant, PrincipalIdentity
from smi_sim.domain.schemas import ProtocolConfig
from smi_sim.modules.crypto.chain import link_payload
from smi_sim.modules.crypto.primitives import (
    CipherEnvelope,
    encode_fields,
    generate_keypair,
    make_nonce,
    seal,
    sign,
)
from smi_sim.modules.identity.store import KeyBindingStore, register_binding
from smi_sim.modules.protocol.engine import EpochAborted, IncreaseRep, ProtocolEngine
from smi_sim.modules.protocol.messages import ProtocolMessage, statement_fields

KS = (1, 2, 3)


def small(k):
    return ProtocolConfig(k=k, epoch_length_s=3600, exchange_interval_s=600, dialing_grace_s=60, aperiodic_jitter=0.0)


def slots(k):
    # Three dialing messages, k initiator links, k participant links and the end tag
    return 3 + 2 * k + 1


def participant_slots(k):
    """Slots whose message is addressed to the participant."""
    return {0, 2} | {3 + 2 * j for j in range(k)} | {slots(k) - 1}


def here(t):
    return LocationReport(position=(0.0, 0.0), time=t)


def engines(alice, alice_keys, bob, bob_keys, k=2):
    pair = []
    for identity, keys, seed in ((alice, alice_keys, 11), (bob, bob_keys, 12)):
        store = KeyBindingStore()
        register_binding(store, alice, alice_keys.public_key, 0)
        register_binding(store, bob, bob_keys.public_key, 0)
        pair.append(ProtocolEngine(identity, keys, store, small(k), np.random.default_rng(seed)))
    return pair


class Trace:
    """Drives one epoch in lock step; interfere(slot, message) may drop or alter a message."""

    def __init__(self, a, b, interfere=lambda slot, message: message):
        self.a, self.b = a, b
        self.interfere = interfere
        self.slot = 0
        self.effects = {a.identity.device_id: [], b.identity.device_id: []}
        self.config = a.config

    def _deliver(self, receiver, message, t):
        slot, self.slot = self.slot, self.slot + 1
        if message is None:
            return None
        message = self.interfere(slot, message)
        if message is None:
            return None
        result = receiver.handle_message(message, t, here(t))
        self.effects[receiver.identity.device_id].extend(result.effects)
        return result.outbound[0] if result.outbound else None

    def _own(self, engine, result):
        self.effects[engine.identity.device_id].extend(result.effects)
        return result.outbound[0] if result.outbound else None

    def play(self, start=0):
        a, b = self.a, self.b
        state, d1 = a.start_epoch(b.identity, start, here(start))
        d2 = self._deliver(b, d1, start + 1)
        d3 = self._deliver(a, d2, start + 2)
        self._deliver(b, d3, start + 3)
        for slot in state.probe_schedule:
            t = slot.time
            conn = self._own(a, a.next_exchange(b.identity, t, here(t)))
            reply = self._deliver(b, conn, t + 1)
            result_tag = self._deliver(a, reply, t + 2)
            if result_tag is not None:
                self._deliver(b, result_tag, t + 3)
        # The end tag slot is consumed even when it was never produced
        self.slot = max(self.slot, slots(self.config.k))
        # Past the participant deadline, which trails the initiator by one interval
        horizon = start + self.config.epoch_length_s + self.config.exchange_interval_s + 60
        self.effects[a.identity.device_id].extend(a.expire(horizon))
        self.effects[b.identity.device_id].extend(b.expire(horizon))
        return self

    def increases(self, device):
        return [e for e in self.effects[device] if isinstance(e, IncreaseRep)]


@pytest.mark.parametrize("k", KS)
def test_clean_trace_completes_both_sides(k, alice, alice_keys, bob, bob_keys):
    trace = Trace(*engines(alice, alice_keys, bob, bob_keys, k)).play()
    assert len(trace.increases("dev-a")) == 1
    assert len(trace.increases("dev-b")) == 1
    assert trace.slot == slots(k)


@pytest.mark.parametrize("k", [1, 2, pytest.param(3, marks=pytest.mark.slow)])
def test_every_loss_pattern(k, alice, alice_keys, bob, bob_keys):
    for dropped in itertools.product((False, True), repeat=slots(k)):
        lost = {i for i, d in enumerate(dropped) if d}
        a, b = engines(alice, alice_keys, bob, bob_keys, k)
        trace = Trace(a, b, lambda slot, message: None if slot in lost else message).play()

        for device in ("dev-a", "dev-b"):
            increases = trace.increases(device)
            assert len(increases) <= 1
            assert all(len(e.interactions) == k for e in increases)
        # The participant completes only on a loss-free epoch
        assert bool(trace.increases("dev-b")) == (not lost)
        # The initiator needs every message up to its last participant link
        needed = set(range(slots(k) - 1))
        assert bool(trace.increases("dev-a")) == (not (lost & needed))
        assert not a.epochs["dev-b"].is_open
        assert not b.epochs.get("dev-a") or not b.epochs["dev-a"].is_open


def _flip_ciphertext(message):
    body = bytearray(message.envelope.ciphertext)
    body[len(body) // 2] ^= 0x40
    return replace(message, envelope=CipherEnvelope(message.envelope.recipient_key_id, bytes(body)))


def _forge_signature(message):
    return replace(message, clear_signature=bytes(64))


@pytest.mark.parametrize("tamper", [_flip_ciphertext, _forge_signature], ids=["ciphertext", "signature"])
@pytest.mark.parametrize("k, position", [(k, position) for k in KS for position in range(slots(k))])
def test_tampered_message_never_counts(k, position, tamper, alice, alice_keys, bob, bob_keys):
    a, b = engines(alice, alice_keys, bob, bob_keys, k)

    def interfere(slot, message):
        if slot != position:
            return message
        if tamper is _forge_signature and not message.clear_signature:
            return tamper(_flip_ciphertext(message))
        return tamper(message)

    trace = Trace(a, b, interfere).play()
    receiver = "dev-b" if position in participant_slots(k) else "dev-a"
    assert trace.increases(receiver) == []
    assert not trace.increases("dev-b")
    aborted_or_dropped = [
        e for e in trace.effects[receiver] if isinstance(e, EpochAborted) or getattr(e, "action", "").startswith("drop")
    ]
    assert aborted_or_dropped


def test_replay_from_previous_epoch_rejected(alice, alice_keys, bob, bob_keys):
    a, b = engines(alice, alice_keys, bob, bob_keys)
    captured = []
    Trace(a, b, lambda slot, message: captured.append(message) or message).play()

    state, d1 = a.start_epoch(bob, 5000, here(5000))
    d2 = b.handle_message(d1, 5001, here(5001)).outbound[0]
    d3 = a.handle_message(d2, 5002, here(5002)).outbound[0]
    b.handle_message(d3, 5003, here(5003))

    old_link = next(m for m in captured if m.variant.value == "ConnInitiator")
    result = b.handle_message(old_link, 5100, here(5100))
    assert result.outbound == []
    assert not any(isinstance(e, IncreaseRep) for e in result.effects)
    assert not b.epochs["dev-a"].is_open


def _forged_link(state, forger, recipient_keys, rng, t):
    """An initiator link from someone holding neither alice's key nor her chain parameter."""
    guess = make_nonce(rng)
    signature = sign(forger.private_key, link_payload(guess, rng.bytes(64), here(t), t))
    body = encode_fields(*statement_fields(here(t), t, state.peer), signature)
    return ProtocolMessage(
        variant=MessageVariant.conn_initiator,
        sender=state.peer,
        recipient=PrincipalIdentity("bob", "dev-b"),
        epoch_index=state.epoch_index,
        sequence=state.last_index + 1,
        envelope=seal(recipient_keys.public_key, body, rng),
        clear_signature=signature,
    )


@pytest.mark.slow
def test_injected_links_never_count(alice, alice_keys, bob, bob_keys):
    a, b = engines(alice, alice_keys, bob, bob_keys)
    forger = generate_keypair(303)
    rng = np.random.default_rng(77)
    trials = 10_000
    effects = []
    for trial in range(trials):
        start = trial * 10_000
        a.abort_epoch(bob, start, "restart")
        _, d1 = a.start_epoch(bob, start, here(start))
        d2 = b.handle_message(d1, start + 1, here(start + 1)).outbound[0]
        d3 = a.handle_message(d2, start + 2, here(start + 2)).outbound[0]
        b.handle_message(d3, start + 3, here(start + 3))
        state = b.epochs["dev-a"]
        t = start + 700
        result = b.handle_message(_forged_link(state, forger, bob_keys, rng, t), t, here(t))
        effects.extend(result.effects)
        assert result.outbound == []
        assert not state.is_open
    assert not any(isinstance(e, IncreaseRep) for e in effects)
    assert sum(isinstance(e, EpochAborted) for e in effects) == trials
