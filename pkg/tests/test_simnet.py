"""Tests for the event queue, event loop and message transport."""

import numpy as np
import pytest

from smi_sim.core.exceptions import EventStormError, SimulationError
from smi_sim.core.simnet import Attempt, EventKind, EventLoop, EventQueue, Transport
from smi_sim.domain.models import ChannelKind, DeliveryOutcome, MessageVariant, PrincipalIdentity
from smi_sim.domain.schemas import NetworkConfig
from smi_sim.modules.crypto.primitives import seal
from smi_sim.modules.protocol.channels import plan_channels
from smi_sim.modules.protocol.messages import ProtocolMessage
from smi_sim.modules.world.adversary import AdversaryField, FbtsSite
from smi_sim.modules.world.grid import Grid

POSITIONS = {"dev-a": (5000.0, 5000.0), "dev-b": (5010.0, 5000.0), "dev-far": (50000.0, 50000.0)}


def message(bob_keys, rng, variant=MessageVariant.conn_initiator, channels=(ChannelKind.sms,), recipient="dev-b"):
    raw = ProtocolMessage(
        variant=variant,
        sender=PrincipalIdentity("alice", "dev-a"),
        recipient=PrincipalIdentity("bob", recipient),
        epoch_index=1,
        sequence=4,
        envelope=seal(bob_keys.public_key, b"y" * 300, rng),
        clear_signature=b"s" * 64,
    )
    return raw.with_plan(plan_channels(raw, channels))


def transport(p=0.0, adversary_channels=(ChannelKind.sms,), **kwargs):
    grid = Grid()
    sites = [FbtsSite((5000.0, 5000.0), 500.0, p)] if p > 0 else []
    streams = {}
    return Transport(
        config=NetworkConfig(),
        adversary=AdversaryField(grid, sites, channels=adversary_channels),
        locate=POSITIONS.__getitem__,
        rng_for=lambda device: streams.setdefault(device, np.random.default_rng(len(streams))),
        max_retries=kwargs.pop("max_retries", 3),
        retry_base_delay_s=60.0,
        proximity_radius_m=30.0,
        **kwargs,
    )


def recording_loop(max_events=10_000):
    loop = EventLoop(max_events)
    fired = []
    for kind in EventKind:
        loop.register_handler(kind, lambda event, fired=fired: fired.append((event.fire_at, event.kind, event.payload)))
    return loop, fired


class TestEventQueue:
    def test_orders_by_time_then_insertion(self):
        queue = EventQueue()
        queue.push(5.0, EventKind.timer, "first at five")
        queue.push(1.0, EventKind.timer, "one")
        queue.push(5.0, EventKind.timer, "second at five")
        assert [queue.pop().payload for _ in range(3)] == ["one", "first at five", "second at five"]

    def test_rejects_the_past(self):
        with pytest.raises(SimulationError):
            EventQueue().push(1.0, EventKind.timer, now=2.0)


class TestEventLoop:
    def test_runs_due_events_and_advances_clock(self):
        loop, fired = recording_loop()
        loop.schedule(10.0, EventKind.timer, "a")
        loop.schedule(30.0, EventKind.timer, "b")
        assert loop.run_until(20.0) == 1
        assert loop.now == 20.0
        assert fired == [(10.0, EventKind.timer, "a")]
        loop.run_until(30.0)
        assert [f[2] for f in fired] == ["a", "b"]

    def test_handlers_can_schedule_follow_ups(self):
        loop = EventLoop(100)
        seen = []

        def tick(event):
            seen.append(event.fire_at)
            if len(seen) < 3:
                loop.schedule_in(5.0, EventKind.timer)

        loop.register_handler(EventKind.timer, tick)
        loop.schedule(0.0, EventKind.timer)
        loop.run_until(100.0)
        assert seen == [0.0, 5.0, 10.0]

    def test_missing_handler(self):
        loop = EventLoop(100)
        loop.schedule(1.0, EventKind.retry)
        with pytest.raises(SimulationError):
            loop.run_until(2.0)

    def test_cannot_run_backwards(self):
        loop, _ = recording_loop()
        loop.run_until(50.0)
        with pytest.raises(SimulationError):
            loop.run_until(10.0)

    def test_event_storm(self):
        loop, _ = recording_loop(max_events=3)
        for _ in range(4):
            loop.schedule(1.5, EventKind.timer)
        with pytest.raises(EventStormError):
            loop.run_until(2.0)

    def test_stop(self):
        loop = EventLoop(100)
        loop.register_handler(EventKind.timer, lambda event: loop.stop())
        loop.schedule(1.0, EventKind.timer)
        loop.schedule(2.0, EventKind.timer)
        assert loop.run_until(10.0) == 1
        assert len(loop.queue) == 1


class TestTransport:
    def test_sms_delay_follows_slowest_part(self, bob_keys, rng):
        sent = message(bob_keys, rng)
        slowest = max(part.segments for part in sent.channel_plan)
        assert transport().delay_for(sent) == pytest.approx(7.4 * slowest)

    def test_data_channel_is_faster(self, bob_keys, rng):
        sms_only = message(bob_keys, rng)
        mixed = message(bob_keys, rng, channels=(ChannelKind.sms, ChannelKind.data))
        assert transport().delay_for(mixed) < transport().delay_for(sms_only)

    def test_clean_network_delivers(self, bob_keys, rng):
        net = transport()
        loop, fired = recording_loop()
        sent = message(bob_keys, rng)
        result = net.dispatch(loop, sent)
        assert result.outcome is DeliveryOutcome.delivered
        loop.run_until(1000.0)
        assert fired == [(pytest.approx(result.delay_s), EventKind.deliver, sent)]
        assert net.counts.delivered == 1
        assert net.counts.sms_segments == sent.sms_segments

    def test_certain_interception_retries_then_gives_up(self, bob_keys, rng):
        net = transport(p=1.0, keep_intercepted=True)
        loop, fired = recording_loop()
        sent = message(bob_keys, rng)
        net.dispatch(loop, sent)
        loop.run_until(10_000.0)
        assert [f[1] for f in fired] == [EventKind.retry]
        retry = fired[0][2]
        assert isinstance(retry, Attempt) and retry.attempt == 1
        assert fired[0][0] == pytest.approx(net.delay_for(sent) + 60.0)

        for attempt in range(1, 4):
            net.dispatch(loop, sent, attempt)
            loop.run_until(loop.now + 10_000.0)
        assert fired[-1][1] is EventKind.undeliverable
        assert net.counts.intercepted == 4
        assert len(net.captured) == 4

    def test_retry_delay_doubles(self):
        net = transport()
        assert [net.retry_delay(a) for a in range(3)] == [60.0, 120.0, 240.0]

    def test_recipient_outside_site_unaffected(self, bob_keys, rng):
        net = transport(p=1.0)
        far = message(bob_keys, rng, recipient="dev-far")
        assert net.send(far, 0.0).outcome is DeliveryOutcome.delivered

    def test_data_channel_escapes_sms_station(self, bob_keys, rng):
        mixed = message(bob_keys, rng, channels=(ChannelKind.sms, ChannelKind.data))
        assert transport(p=1.0).send(mixed, 0.0).outcome is DeliveryOutcome.delivered
        assert transport(p=1.0).send(message(bob_keys, rng), 0.0).outcome is DeliveryOutcome.intercepted

    def test_station_on_every_channel_intercepts(self, bob_keys, rng):
        mixed = message(bob_keys, rng, channels=(ChannelKind.sms, ChannelKind.data))
        net = transport(p=1.0, adversary_channels=(ChannelKind.sms, ChannelKind.data))
        assert net.send(mixed, 0.0).outcome is DeliveryOutcome.intercepted

    def test_two_channel_survival_rate(self, bob_keys, rng):
        mixed = message(bob_keys, rng, channels=(ChannelKind.sms, ChannelKind.data))
        net = transport(p=0.5, adversary_channels=(ChannelKind.sms, ChannelKind.data))
        outcomes = [net.send(mixed, float(t)).outcome for t in range(20_000)]
        delivered = sum(o is DeliveryOutcome.delivered for o in outcomes) / len(outcomes)
        # Both channels must be captured: 1 - 0.5 * 0.5
        assert delivered == pytest.approx(0.75, abs=0.015)

    @pytest.mark.slow
    def test_delivery_rate_under_one_station(self, bob_keys, rng):
        sent = message(bob_keys, rng)
        net = transport(p=0.28)
        outcomes = [net.send(sent, float(t)).outcome for t in range(100_000)]
        delivered = sum(o is DeliveryOutcome.delivered for o in outcomes) / len(outcomes)
        assert delivered == pytest.approx(0.72, abs=0.01)

    def test_sender_side_interference(self, bob_keys, rng):
        raw = ProtocolMessage(
            variant=MessageVariant.conn_initiator,
            sender=PrincipalIdentity("alice", "dev-a"),
            recipient=PrincipalIdentity("far", "dev-far"),
            epoch_index=1,
            sequence=4,
            envelope=seal(bob_keys.public_key, b"z", rng),
        )
        sent = raw.with_plan(plan_channels(raw, [ChannelKind.sms]))
        assert transport(p=1.0).send(sent, 0.0).outcome is DeliveryOutcome.delivered
        assert transport(p=1.0, sender_side=True).send(sent, 0.0).outcome is DeliveryOutcome.intercepted

    def test_proximity_needs_range(self, bob_keys, rng):
        net = transport()
        near = message(bob_keys, rng, MessageVariant.trusted_loc_offer, (ChannelKind.sms, ChannelKind.bluetooth))
        far = message(
            bob_keys, rng, MessageVariant.trusted_loc_offer, (ChannelKind.sms, ChannelKind.bluetooth), "dev-far"
        )
        assert net.send(near, 0.0).outcome is DeliveryOutcome.delivered
        loop, fired = recording_loop()
        assert net.dispatch(loop, far).outcome is DeliveryOutcome.failed
        loop.run_until(1.0)
        assert fired[0][1] is EventKind.undeliverable

    def test_trace_records_every_attempt(self, bob_keys, rng):
        net = transport(p=1.0, trace=True)
        sent = message(bob_keys, rng)
        net.send(sent, 0.0)
        net.send(sent, 100.0, attempt=1)
        assert [(r.outcome, r.attempt) for r in net.transcript] == [("intercepted", 0), ("intercepted", 1)]
        assert net.transcript[0].variant == "ConnInitiator"
