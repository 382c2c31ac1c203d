"""Tests for quota accounting, batching and active-list selection."""

import pytest

from smi_sim.core.exceptions import QuotaExceededError
from smi_sim.domain.models import PrincipalIdentity
from smi_sim.modules.scheduler.engine import (
    BackoffState,
    ContactEntry,
    apply_backoff,
    assign_batches,
    backoff_on_clean_period,
    backoff_on_loss,
    build_active_list,
    can_start_epoch,
    estimate_epoch_cost,
    max_boost_priority,
    new_quota,
    record_send,
    roll_quota,
    suggest_priority,
)

DAY = 86400


def contact(name, priority, batch=0):
    return ContactEntry(PrincipalIdentity(name, f"dev-{name}"), priority, batch)


class TestQuota:
    def test_period_aligned(self):
        quota = new_quota(100, DAY, now=DAY + 500)
        assert quota.period_start == DAY
        assert quota.headroom == 100

    def test_roll_resets_next_period(self):
        quota = record_send(new_quota(100, DAY), 40)
        assert roll_quota(quota, DAY - 1) is quota
        rolled = roll_quota(quota, 2 * DAY + 10)
        assert rolled.period_start == 2 * DAY
        assert rolled.messages_sent == 0

    def test_overrun_up_to_hard_cap(self):
        quota = new_quota(100, DAY)
        assert quota.hard_cap == 110
        quota = record_send(quota, 108)
        assert quota.headroom == 0
        with pytest.raises(QuotaExceededError):
            record_send(quota, 3)

    def test_epoch_needs_headroom(self):
        quota = record_send(new_quota(100, DAY), 80)
        assert can_start_epoch(quota, 20)
        assert not can_start_epoch(quota, 21)

    def test_epoch_cost(self):
        assert estimate_epoch_cost(24) == (3 + 48 + 1) * 3
        assert estimate_epoch_cost(3, segments_per_message=1) == 10


class TestBatches:
    def test_batches_are_disjoint_and_balanced(self):
        peers = [PrincipalIdentity(f"u{i}", f"d{i}") for i in range(60)]
        batches = assign_batches(peers, batch_size=25)
        assert sorted(set(batches)) == [0, 1, 2]
        assert [batches.count(b) for b in range(3)] == [20, 20, 20]

    def test_no_peers(self):
        assert assign_batches([]) == []


class TestPriority:
    def test_bounds(self):
        with pytest.raises(ValueError):
            contact("x", 0)
        with pytest.raises(ValueError):
            contact("x", 11)

    def test_suggestion_grows_with_frequency(self):
        levels = [suggest_priority(f) for f in (0, 0.5, 1, 3, 10, 1000)]
        assert levels == sorted(levels)
        assert levels[0] == 1
        assert levels[-1] == 10
        assert suggest_priority(1) == 3

    def test_boost_cap_steps_down_each_cycle(self):
        assert max_boost_priority(0, 3600) == 10
        assert max_boost_priority(3600, 3600) == 9
        assert max_boost_priority(10 * 3600, 3600) == 10


class TestActiveList:
    contacts = [contact("a", 10, 0), contact("b", 9, 0), contact("c", 8, 1), contact("d", 3, 1)]

    def test_batch_turn_reserves_first_slot(self):
        quota = new_quota(100, DAY, now=DAY)
        active = build_active_list(self.contacts, quota, DAY, epoch_cost=30, priority_cycle_s=3600)
        assert [e.contact.peer.user_id for e in active] == ["c", "a", "b"]
        assert active[0].reserved
        assert not any(e.reserved for e in active[1:])

    def test_capacity_follows_headroom(self):
        quota = record_send(new_quota(100, DAY), 50)
        active = build_active_list(self.contacts, quota, 0, epoch_cost=30, priority_cycle_s=3600)
        assert [e.contact.peer.user_id for e in active] == ["a"]

    def test_no_headroom(self):
        quota = record_send(new_quota(100, DAY), 100)
        assert build_active_list(self.contacts, quota, 0, epoch_cost=30, priority_cycle_s=3600) == []

    def test_backoff_shrinks_list(self):
        quota = new_quota(100, DAY)
        active = build_active_list(
            self.contacts, quota, 0, epoch_cost=30, priority_cycle_s=3600, backoff=BackoffState(rate=0.5)
        )
        assert len(active) == 1

    def test_trusted_boost_below_cap(self):
        quota = new_quota(1000, DAY)
        # One cycle in, priority 10 is above the boost cap of 9
        active = build_active_list(self.contacts, quota, 3600, epoch_cost=30, priority_cycle_s=3600)
        boosted = {e.contact.peer.user_id: e.trusted_boost for e in active}
        assert boosted == {"a": False, "b": True, "c": True, "d": True}


class TestBackoff:
    def test_loss_halves_down_to_floor(self):
        state = BackoffState()
        for _ in range(20):
            state = backoff_on_loss(state)
        assert state.rate == pytest.approx(1.0 / 64)

    def test_clean_periods_recover(self):
        state = BackoffState(rate=0.5)
        state = backoff_on_clean_period(state)
        assert state.rate == pytest.approx(0.55)
        for _ in range(20):
            state = backoff_on_clean_period(state)
        assert state.rate == 1.0

    def test_slow_delivery_counts_as_congestion(self):
        state = BackoffState(rate=0.5)
        assert apply_backoff(state, observed_delay_s=90.0, loss=False).rate == pytest.approx(0.25)
        assert apply_backoff(state, observed_delay_s=20.0, loss=True).rate == pytest.approx(0.25)
        assert apply_backoff(state, observed_delay_s=20.0, loss=False).rate == pytest.approx(0.55)

    def test_delay_threshold_is_configurable(self):
        state = BackoffState(rate=0.5)
        assert apply_backoff(state, 20.0, False, delay_threshold_s=10.0).rate == pytest.approx(0.25)
