"""Tests for reputation ledgers, calibration and the threshold policy."""

import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from smi_sim.core.exceptions import ThresholdError
from smi_sim.domain.models import (
    BindingStatus,
    LocationReport,
    LocationTrust,
    PrincipalIdentity,
    PrincipalKind,
)
from smi_sim.modules.crypto.primitives import generate_keypair
from smi_sim.modules.protocol.cloud import issue_identity_proof
from smi_sim.modules.reputation.engine import (
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
)
from smi_sim.modules.reputation.threshold import ThresholdPolicy, compute_threshold, l_of_p

DAY = 86400
VERIFIER = PrincipalIdentity("verifier", "verifier-0", PrincipalKind.third_party_verifier)


@pytest.fixture
def weights():
    return Weights(alpha=0.8, w_untrusted=2.0, w_trusted=5.0, gamma=1.0, delta=10.0)


@pytest.fixture
def calibrated(weights):
    return calibrate_weights(weights, 24, 3, 1680.0)


@pytest.fixture
def ledger(alice, bob):
    return new_ledger(alice, bob)


def untrusted(t):
    return LocationReport((0.0, 0.0), t)


def trusted(t, endpoint="tle-0-0"):
    issuer = PrincipalIdentity("tle-0", endpoint, PrincipalKind.trusted_location_endpoint)
    return LocationReport((0.0, 0.0), t, LocationTrust.trusted, issuer=issuer, ttl=3600)


def run_epoch(ledger, weights, count, start=0, spacing=3600):
    for j in range(count):
        t = start + j * spacing
        ledger = record_interaction(ledger, untrusted(t), t)
    return close_epoch(ledger, weights, now=start + count * spacing)


class TestWeights:
    def test_alpha_range(self):
        with pytest.raises(ValidationError):
            Weights(alpha=0.4, w_untrusted=2.0, w_trusted=5.0, gamma=1.0, delta=10.0)

    def test_trusted_weight_must_exceed_untrusted(self):
        with pytest.raises(ValidationError):
            Weights(alpha=0.8, w_untrusted=5.0, w_trusted=2.0, gamma=1.0, delta=10.0)

    def test_untrusted_weight_above_one(self):
        with pytest.raises(ValidationError):
            Weights(alpha=0.8, w_untrusted=0.5, w_trusted=5.0, gamma=1.0, delta=10.0)

    def test_delta_must_exceed_gamma(self):
        with pytest.raises(ValidationError):
            Weights(alpha=0.8, w_untrusted=2.0, w_trusted=5.0, gamma=10.0, delta=1.0)

    def test_calibration(self, weights, calibrated):
        assert per_epoch_increase(calibrated, 24, 3) == pytest.approx(1680.0)
        assert calibrated.delta > calibrated.gamma
        assert calibrated.gamma / weights.gamma == pytest.approx(calibrated.delta / weights.delta)
        assert calibrated.gamma == pytest.approx(105.847, rel=1e-4)


class TestRecordInteraction:
    def test_untrusted_counts(self, ledger):
        for t in (0, 10, 20):
            ledger = record_interaction(ledger, untrusted(t), t)
        assert (ledger.m1_current, ledger.m2_current) == (3, 0)

    def test_repeat_trusted_in_window(self, ledger):
        ledger = record_interaction(ledger, trusted(0), 0)
        ledger = record_interaction(ledger, trusted(3600), 3600)
        assert (ledger.m1_current, ledger.m2_current) == (1, 1)

    def test_distinct_trusted(self, ledger):
        ledger = record_interaction(ledger, trusted(0, "tle-0-0"), 0)
        ledger = record_interaction(ledger, trusted(10, "tle-0-1"), 10)
        assert ledger.m2_current == 2

    def test_trusted_counts_again_after_window(self, ledger):
        ledger = record_interaction(ledger, trusted(0), 0)
        ledger = record_interaction(ledger, trusted(2 * DAY + 1), 2 * DAY + 1)
        assert ledger.m2_current == 2

    def test_per_epoch_uniqueness(self, ledger, weights):
        ledger = record_interaction(ledger, trusted(0), 0, per_epoch=True)
        ledger = close_epoch(ledger, weights, now=10, per_epoch_uniqueness=True)
        ledger = record_interaction(ledger, trusted(20), 20, per_epoch=True)
        assert ledger.m2_current == 1

    def test_time_cannot_go_backwards(self, ledger):
        ledger = record_interaction(ledger, untrusted(100), 100)
        with pytest.raises(ValueError):
            record_interaction(ledger, untrusted(50), 50)

    def test_trusted_beats_untrusted(self, ledger, weights):
        plain = close_epoch(record_interaction(ledger, untrusted(0), 0), weights)
        better = close_epoch(record_interaction(ledger, trusted(0), 0), weights)
        assert better.m_history[-1] > plain.m_history[-1]


class TestCloseEpoch:
    def test_first_epoch(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        assert ledger.f1_value == pytest.approx(38.4)
        assert ledger.epoch_index == 1
        assert (ledger.m1_current, ledger.m2_current) == (0, 0)

    def test_empty_epoch_decays(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        decayed = close_epoch(ledger, weights)
        assert decayed.f1_value == pytest.approx(0.2 * ledger.f1_value)

    def test_two_epochs(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 5)
        ledger = run_epoch(ledger, weights, 10, start=DAY)
        assert ledger.f1_value == pytest.approx(17.6)

    def test_n_empty_epochs(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        start = ledger.f1_value
        for _ in range(4):
            ledger = close_epoch(ledger, weights)
        assert ledger.f1_value == pytest.approx(start * 0.2 ** 4, rel=1e-12)

    def test_discard_keeps_f1(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        ledger = record_interaction(ledger, untrusted(DAY), DAY)
        kept = close_epoch(ledger, weights, now=DAY + 1, discard=True)
        assert kept.f1_value == ledger.f1_value
        assert kept.m1_current == 0


class TestScore:
    def test_empty(self, ledger, weights):
        assert score(ledger, weights) == 0.0

    def test_one_calibrated_epoch(self, ledger, calibrated):
        ledger = run_epoch(ledger, calibrated, 24)
        assert score(ledger, calibrated) == pytest.approx(calibrated.gamma * 38.4)

    def test_non_decreasing_within_epoch(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        ledger = run_epoch(ledger, weights, 24, start=DAY)
        last = score(ledger, weights)
        for j in range(24):
            t = 2 * DAY + j * 3600
            ledger = record_interaction(ledger, untrusted(t), t)
            current = score(ledger, weights)
            assert current >= last
            last = current

    def test_closed_form_matches(self, ledger, weights):
        ledger = run_epoch(ledger, weights, 24)
        ledger = add_identity_proof(ledger, VERIFIER, DAY)
        ledger = run_epoch(ledger, weights, 7, start=DAY + 10)
        expected = closed_form_score(ledger.m_history, ledger.f2_proofs, weights)
        assert score(ledger, weights) == pytest.approx(expected, rel=1e-9)

    def test_closed_form_examples(self, weights):
        assert closed_form_score([], 0, weights) == 0.0
        assert closed_form_score([48.0], 0, weights) == pytest.approx(38.4)

    def test_closed_form_random_histories(self, weights):
        rng = np.random.default_rng(3)
        for _ in range(200):
            history = list(rng.uniform(0, 100, size=int(rng.integers(0, 20))))
            f1 = 0.0
            for m in history:
                f1 = weights.alpha * m + (1 - weights.alpha) * f1
            recursive = weights.gamma * f1 + weights.delta * 2 * weights.proof_unit
            closed = closed_form_score(history, 2, weights)
            assert abs(recursive - closed) <= 1e-9 * max(1.0, closed)

    def test_recency_bias(self, weights):
        assert closed_form_score([10.0, 50.0], 0, weights) >= closed_form_score([50.0, 10.0], 0, weights)


class TestIdentityProofs:
    def test_proofs_are_linear(self, ledger, weights):
        for t in range(5):
            ledger = add_identity_proof(ledger, VERIFIER, t)
        assert ledger.f2_proofs == 5
        assert score(ledger, weights) == pytest.approx(10.0 * 5 * 100.0)

    def test_mobile_principal_rejected(self, ledger, alice):
        assert add_identity_proof(ledger, alice, 0).f2_proofs == 0

    def test_signed_proof(self, ledger, bob, bob_keys):
        verifier_keys = generate_keypair(99)
        proof = issue_identity_proof(VERIFIER, verifier_keys, bob, bob_keys.public_key, 10)
        accepted = add_identity_proof(ledger, VERIFIER, 10, proof, verifier_keys.public_key)
        assert accepted.f2_proofs == 1

    def test_tampered_proof_rejected(self, ledger, bob, bob_keys):
        verifier_keys = generate_keypair(99)
        proof = issue_identity_proof(VERIFIER, verifier_keys, bob, bob_keys.public_key, 10)
        forged = replace(proof, issued_at=11)
        assert add_identity_proof(ledger, VERIFIER, 10, forged, verifier_keys.public_key).f2_proofs == 0

    def test_proof_for_other_subject_rejected(self, ledger, alice, alice_keys):
        verifier_keys = generate_keypair(99)
        proof = issue_identity_proof(VERIFIER, verifier_keys, alice, alice_keys.public_key, 10)
        assert add_identity_proof(ledger, VERIFIER, 10, proof, verifier_keys.public_key).f2_proofs == 0


class TestThreshold:
    def test_baseline_threshold(self):
        policy = compute_threshold(0.1, 3, 24, 1680.0)
        assert policy.delta_threshold == pytest.approx(5040.0)
        assert 5000 <= policy.delta_threshold <= 5100
        assert policy.delta_normalized == pytest.approx(72.0)

    def test_no_adversary(self):
        assert compute_threshold(0.0, 3, 24, 1680.0).delta_threshold == pytest.approx(5040.0)

    @pytest.mark.parametrize("p", [0.1, 0.28, 0.54])
    def test_inequality_holds(self, p):
        policy = compute_threshold(p, 3, 24, 1680.0)
        assert 3 * 24 * math.log(1 - p) > policy.delta_normalized * math.log(p)

    def test_high_p_raises_threshold(self):
        policy = compute_threshold(0.54, 3, 24, 1680.0)
        assert policy.delta_threshold > 5040.0
        assert policy.delta_normalized > 72 * l_of_p(0.54)

    def test_l_of_p(self):
        assert l_of_p(0.5) == pytest.approx(1.0)
        grid = [l_of_p(p) for p in np.linspace(0.01, 0.99, 99)]
        assert all(a < b for a, b in zip(grid, grid[1:]))

    @pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
    def test_bad_p(self, p):
        with pytest.raises(ThresholdError):
            compute_threshold(p, 3, 24, 1680.0)

    def test_policy_rejects_weak_threshold(self):
        with pytest.raises(ValidationError):
            ThresholdPolicy(
                delta_threshold=100.0,
                epochs_required=3,
                k=24,
                p_design=0.54,
                per_epoch_increase=1680.0,
                delta_normalized=10.0,
            )


class TestAuthentication:
    def test_converges_on_third_epoch(self, ledger, calibrated):
        policy = compute_threshold(0.1, 3, 24, 1680.0)
        for epoch in range(3):
            assert not is_authenticated(ledger, policy, BindingStatus.active, calibrated)
            ledger = run_epoch(ledger, calibrated, 24, start=epoch * DAY)
        assert is_authenticated(ledger, policy, BindingStatus.active, calibrated)

    def test_conflicted_binding(self, ledger, calibrated):
        policy = compute_threshold(0.1, 3, 24, 1680.0)
        for epoch in range(4):
            ledger = run_epoch(ledger, calibrated, 24, start=epoch * DAY)
        assert not is_authenticated(ledger, policy, BindingStatus.conflicted, calibrated)
        assert not is_authenticated(ledger, policy, None, calibrated)

    def test_liveness_horizon(self, ledger, calibrated):
        policy = compute_threshold(0.1, 3, 24, 1680.0)
        for epoch in range(4):
            ledger = run_epoch(ledger, calibrated, 24, start=epoch * DAY)
        fresh = ledger.last_activity_at + DAY
        stale = ledger.last_activity_at + 4 * DAY
        assert is_authenticated(ledger, policy, BindingStatus.active, calibrated, fresh, 3 * DAY)
        assert not is_authenticated(ledger, policy, BindingStatus.active, calibrated, stale, 3 * DAY)

    def test_revocation_eligible_after_decay(self, ledger, calibrated):
        policy = compute_threshold(0.1, 3, 24, 1680.0)
        for epoch in range(4):
            ledger = run_epoch(ledger, calibrated, 24, start=epoch * DAY)
        assert not revocation_eligible(ledger, policy, calibrated)
        now = ledger.last_activity_at
        while committed_score(ledger, calibrated) >= 0.2 * policy.delta_threshold:
            now += DAY
            ledger = apply_idle_decay(ledger, calibrated, now, DAY, 3)
        assert revocation_eligible(ledger, policy, calibrated)

    def test_idle_decay_waits(self, ledger, calibrated):
        ledger = run_epoch(ledger, calibrated, 24)
        unchanged = apply_idle_decay(ledger, calibrated, ledger.last_activity_at + DAY, DAY, 3)
        assert unchanged.f1_value == ledger.f1_value

    def test_reset_ledger(self, ledger, calibrated):
        ledger = run_epoch(ledger, calibrated, 24)
        cleared = reset_ledger(ledger)
        assert score(cleared, calibrated) == 0.0
        assert cleared.peer == ledger.peer
