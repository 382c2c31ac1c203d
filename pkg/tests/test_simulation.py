"""End-to-end runs of small scenarios through the discrete-event simulator."""

import pytest
from pydantic import ValidationError

from smi_sim.services import experiment_service, preset_service


def small(preset="baseline", **overrides):
    overrides.setdefault("node_count", 6)
    overrides.setdefault("seed", 3)
    return preset_service.resolve_config(preset, None, overrides.items())


@pytest.fixture(scope="module")
def baseline_run():
    return experiment_service.run_experiment(small())


@pytest.mark.slow
class TestBaselineRun:
    def test_every_subject_authenticated(self, baseline_run):
        summary = baseline_run.result.summary
        assert summary.subject_count > 0
        assert summary.converged_count == summary.subject_count
        assert summary.lambda_ == 0.0

    def test_three_epochs_of_exchanges(self, baseline_run):
        # Δ equals three calibrated epochs, so each subject needs exactly 3·k exchanges
        k = baseline_run.config.protocol.k
        assert {n.noe for n in baseline_run.result.summary.nodes} == {3 * k}
        assert baseline_run.result.summary.mean_convergence_hours < 6 * 24

    def test_threshold_reported(self, baseline_run):
        summary = baseline_run.result.summary
        assert summary.threshold == pytest.approx(5040.0)
        assert summary.per_epoch_increase == pytest.approx(1680.0)

    def test_no_interference_no_loss(self, baseline_run):
        messages = baseline_run.result.summary.messages
        assert messages.sent > 0
        assert messages.intercepted == 0
        assert messages.delivered == messages.sent

    def test_scores_only_grow(self, baseline_run):
        by_pair = {}
        for sample in baseline_run.result.samples:
            by_pair.setdefault((sample.observer_id, sample.peer_id), []).append(sample.score)
        assert by_pair
        for scores in by_pair.values():
            assert scores == sorted(scores)

    def test_same_seed_same_run(self, baseline_run):
        again = experiment_service.run_experiment(small())
        assert again.result.summary.model_dump() == baseline_run.result.summary.model_dump()
        assert [s.model_dump() for s in again.result.samples] == [
            s.model_dump() for s in baseline_run.result.samples
        ]


@pytest.mark.slow
def test_heavy_loss_aborts_epochs():
    run = experiment_service.run_experiment(small(duration_days=2, **{"adversary.ambient_loss": 0.9}))
    summary = run.result.summary
    assert summary.messages.intercepted > 0
    assert summary.epochs_aborted > 0
    assert summary.converged_count == 0


@pytest.mark.slow
def test_trace_records_dialing_first():
    run = experiment_service.run_experiment(small(duration_days=1, node_count=2, trace=True))
    transcript = run.result.transcript
    assert transcript
    assert transcript[0].variant == "Dialing1"
    assert {r.outcome for r in transcript} == {"delivered"}


def test_trials_share_config_hash():
    first, second = small(seed=1), small(seed=2)
    assert first.config_hash() == second.config_hash()
    assert first.config_hash() != small(node_count=8).config_hash()


def test_owner_revocation_needs_a_real_node():
    with pytest.raises(ValidationError):
        small(node_count=2, **{"identity.owner_revocations": {5: 100}})


@pytest.mark.slow
class TestRevocation:
    def test_owner_revocation_reaches_every_holder(self):
        # One epoch has completed by t=1.5 days, so the partner holds a positive score
        run = experiment_service.run_experiment(
            small(node_count=2, **{"identity.owner_revocations": {0: 129600}})
        )
        audit = run.result.audit
        revoked = [e for e in audit.events if e.action == "key_revoked"]
        assert [(e.entity_id, e.details["notified"]) for e in revoked] == [("dev-0000", 1)]
        received = [e for e in audit.events if e.action == "revocation_received"]
        assert [(e.actor, e.entity_id) for e in received] == [("dev-0001", "dev-0000")]
        assert received[0].at > revoked[0].at
        assert audit.count("epoch_refused") >= 1
        assert run.result.summary.converged_count == 0

    def test_revocation_without_reputation_notifies_nobody(self):
        run = experiment_service.run_experiment(
            small(node_count=2, duration_days=1, **{"identity.owner_revocations": {0: 10}})
        )
        audit = run.result.audit
        assert [e.details["notified"] for e in audit.events if e.action == "key_revoked"] == [0]
        assert audit.count("revocation_received") == 0


@pytest.mark.slow
def test_replayed_captures_are_rejected():
    overrides = {
        "adversary.mode": "intercept",
        "adversary.replay_delay_s": 1800.0,
        "adversary.ambient_loss": 0.2,
    }
    run = experiment_service.run_experiment(small(duration_days=2, node_count=4, **overrides))
    messages = run.result.summary.messages
    assert 0 < messages.replayed <= messages.intercepted
    # A replayed link is out of order for whatever epoch is open when it lands
    assert run.result.summary.epochs_aborted > 0
    for node in run.result.summary.nodes:
        assert node.epochs_completed <= 2
