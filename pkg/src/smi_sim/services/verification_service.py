# src/smi_sim/services/verification_service.py
"""Analytic self-checks behind the `verify` command."""

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from smi_sim.domain.models import LocationReport, LocationTrust, PrincipalIdentity, PrincipalKind
from smi_sim.domain.schemas import RunConfig
from smi_sim.modules.protocol.channels import (
    multi_channel_success_probability,
    simulate_multichannel_epochs,
)
from smi_sim.modules.reputation.engine import (
    Weights,
    add_identity_proof,
    close_epoch,
    closed_form_score,
    new_ledger,
    per_epoch_increase,
    record_interaction,
    score,
)
from smi_sim.modules.reputation.threshold import compute_threshold, l_of_p
from smi_sim.services.experiment_service import resolve_policy, resolve_weights
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)

CLOSED_FORM_HISTORIES = 1000
CLOSED_FORM_TOLERANCE = 1e-9
INEQUALITY_P_VALUES = (0.1, 0.28, 0.54)
L_GRID = np.linspace(0.01, 0.99, 99)
MULTICHANNEL_P = 0.28
MULTICHANNEL_KS = (3, 4, 5)
MULTICHANNEL_TRIALS = 100_000
MULTICHANNEL_TOLERANCE = 0.02
VERIFY_SEED = 20240601


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def random_history_ledger(weights: Weights, rng: np.random.Generator):
    """Ledger fed a random mix of untrusted, trusted and proof events."""
    observer = PrincipalIdentity("observer", "obs-0")
    peer = PrincipalIdentity("peer", "peer-0")
    verifier = PrincipalIdentity("verifier", "verifier-0", PrincipalKind.third_party_verifier)
    ledger = new_ledger(observer, peer)
    now = 0
    endpoint = 0
    for _ in range(int(rng.integers(1, 12))):
        for _ in range(int(rng.integers(0, 30))):
            now += int(rng.integers(1, 600))
            if rng.random() < 0.2:
                endpoint += 1
                issuer = PrincipalIdentity(
                    "endpoint", f"tl-{endpoint}", PrincipalKind.trusted_location_endpoint
                )
                location = LocationReport((0.0, 0.0), now, LocationTrust.trusted, issuer=issuer)
            else:
                location = LocationReport((0.0, 0.0), now)
            ledger = record_interaction(ledger, location, now)
        if rng.random() < 0.1:
            ledger = add_identity_proof(ledger, verifier, now)
        ledger = close_epoch(ledger, weights, now=now)
    return ledger


def check_weights(weights: Weights) -> CheckResult:
    detail = (
        f"α={weights.alpha}, w_u={weights.w_untrusted}, w_t={weights.w_trusted}, "
        f"γ={weights.gamma:.4f}, δ={weights.delta:.4f}"
    )
    return CheckResult("weights", True, detail)


def check_closed_form(
    weights: Weights, histories: int = CLOSED_FORM_HISTORIES, seed: int = VERIFY_SEED
) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(histories):
        ledger = random_history_ledger(weights, rng)
        recursive = score(ledger, weights)
        closed = closed_form_score(ledger.m_history, ledger.f2_proofs, weights)
        scale = max(abs(recursive), abs(closed), 1e-300)
        worst = max(worst, abs(recursive - closed) / scale)
    passed = worst <= CLOSED_FORM_TOLERANCE
    return CheckResult("closed-form", passed, f"{histories} histories, worst relative error {worst:.2e}")


def check_threshold(config: RunConfig, weights: Weights) -> CheckResult:
    rep, k = config.reputation, config.protocol.k
    policy = resolve_policy(config, weights)
    baseline = rep.epochs_required * policy.per_epoch_increase
    problems = []
    if rep.threshold_override is None and policy.delta_threshold < baseline * (1 - 1e-12):
        problems.append(f"Δ={policy.delta_threshold:.2f} below L·per-epoch {baseline:.2f}")
    for p in INEQUALITY_P_VALUES:
        at_p = compute_threshold(p, rep.epochs_required, k, policy.per_epoch_increase)
        # (1-p)^{Lk} > p^{Δnorm}, compared in log space
        lhs = rep.epochs_required * k * math.log(1.0 - p)
        rhs = at_p.delta_normalized * math.log(p)
        if not lhs > rhs:
            problems.append(f"inequality fails at p={p}")
    detail = f"Δ={policy.delta_threshold:.2f}, Δnorm={policy.delta_normalized:.2f}"
    if problems:
        detail += "; " + "; ".join(problems)
    return CheckResult("threshold", not problems, detail)


def check_l_grid() -> CheckResult:
    values = np.array([l_of_p(float(p)) for p in L_GRID])
    monotone = bool(np.all(np.diff(values) > 0))
    symmetric = abs(l_of_p(0.5) - 1.0) < 1e-12
    return CheckResult(
        "l(p) grid",
        monotone and symmetric,
        f"increasing on {len(L_GRID)} points: {monotone}; l(0.5) = {round(l_of_p(0.5), 6)}",
    )


def check_calibration(config: RunConfig, weights: Weights) -> CheckResult:
    rep = config.reputation
    gain = per_epoch_increase(weights, config.protocol.k, rep.epochs_required)
    if not rep.calibrate:
        return CheckResult("calibration", True, f"uncalibrated, per-epoch increase {gain:.2f}")
    passed = math.isclose(gain, rep.per_epoch_target, rel_tol=1e-9)
    return CheckResult("calibration", passed, f"per-epoch increase {gain:.2f} (target {rep.per_epoch_target:.2f})")


def check_multichannel(
    p: float = MULTICHANNEL_P,
    ks: Sequence[int] = MULTICHANNEL_KS,
    trials: int = MULTICHANNEL_TRIALS,
    seed: int = VERIFY_SEED,
) -> CheckResult:
    expected = multi_channel_success_probability(p, ks)
    observed = simulate_multichannel_epochs(p, ks, trials, np.random.default_rng(seed))
    passed = abs(observed - expected) <= MULTICHANNEL_TOLERANCE
    return CheckResult(
        "multi-channel",
        passed,
        f"p={p}, ks={tuple(ks)}: simulated {observed:.4f} vs formula {expected:.4f}",
    )


def describe_l(p: float) -> CheckResult:
    try:
        value = l_of_p(p)
    except ValueError as exc:
        return CheckResult(f"l({p:g})", False, str(exc))
    return CheckResult(f"l({p:g})", True, f"l({p:g}) = {round(value, 6)}")


def run_checks(config: RunConfig, extra_p: Iterable[float] = ()) -> List[CheckResult]:
    weights = resolve_weights(config)
    results = [
        check_weights(weights),
        check_closed_form(weights),
        check_threshold(config, weights),
        check_l_grid(),
        check_calibration(config, weights),
        check_multichannel(),
    ]
    results.extend(describe_l(p) for p in extra_p)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning(f"❌ Failed checks: {', '.join(failed)}")
    else:
        logger.info(f"✅ All {len(results)} checks passed")
    return results
