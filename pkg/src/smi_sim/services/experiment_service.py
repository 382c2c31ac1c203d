# src/smi_sim/services/experiment_service.py
import time
from dataclasses import dataclass
from typing import List, Optional

from smi_sim.core.simulation import Simulation, SimulationResult
from smi_sim.core.worker_pool import run_seeds
from smi_sim.domain.schemas import RunConfig
from smi_sim.modules.reputation.engine import Weights, calibrate_weights, per_epoch_increase
from smi_sim.modules.reputation.threshold import ThresholdPolicy, compute_threshold
from smi_sim.utils.logging import get_logger, log_performance_metric, log_run_summary

logger = get_logger(__name__)


@dataclass
class ExperimentRun:
    config: RunConfig
    weights: Weights
    policy: ThresholdPolicy
    result: SimulationResult
    wall_s: float


@dataclass
class BootstrapComparison:
    with_verifier: List[ExperimentRun]
    without_verifier: List[ExperimentRun]


def resolve_weights(config: RunConfig) -> Weights:
    rep = config.reputation
    weights = rep.weights()
    if rep.calibrate:
        weights = calibrate_weights(
            weights, config.protocol.k, rep.epochs_required, rep.per_epoch_target
        )
    return weights


def resolve_policy(config: RunConfig, weights: Weights) -> ThresholdPolicy:
    rep, k = config.reputation, config.protocol.k
    gain = per_epoch_increase(weights, k, rep.epochs_required)
    policy = compute_threshold(rep.p_design, rep.epochs_required, k, gain)
    if rep.threshold_override is not None:
        policy = ThresholdPolicy(
            delta_threshold=rep.threshold_override,
            epochs_required=rep.epochs_required,
            k=k,
            p_design=rep.p_design,
            per_epoch_increase=gain,
            delta_normalized=rep.threshold_override * k / gain,
        )
    return policy


def run_experiment(config: RunConfig) -> ExperimentRun:
    """Run one seeded simulation of config."""
    weights = resolve_weights(config)
    policy = resolve_policy(config, weights)
    logger.info(
        f"🚀 Starting '{config.name}' seed {config.seed}: {config.node_count} nodes, "
        f"{config.duration_days:g} days, Δ={policy.delta_threshold:.1f}"
    )
    started = time.perf_counter()
    result = Simulation(config, weights, policy).run()
    wall = time.perf_counter() - started
    log_performance_metric(logger, f"Simulation seed {config.seed}", wall, sim_seconds=result.summary.sim_end_s)
    log_run_summary(
        logger, config.name, config.seed, result.summary.model_dump(by_alias=True), wall
    )
    return ExperimentRun(config, weights, policy, result, wall)


def run_trials(
    config: RunConfig, trials: int = 1, max_workers: Optional[int] = None
) -> List[ExperimentRun]:
    """Seeds seed, seed+1, ... each run in its own worker."""
    seeds = [config.seed + i for i in range(max(1, trials))]
    return run_seeds(
        lambda seed: run_experiment(config.model_copy(update={"seed": seed})),
        seeds,
        max_workers,
    )


def without_verifier(config: RunConfig) -> RunConfig:
    verifier = config.verifier.model_copy(update={"enabled": False, "compare_without": False})
    return config.model_copy(update={"verifier": verifier, "name": f"{config.name}-no-verifier"})


def run_bootstrap_comparison(
    config: RunConfig, trials: int = 1, max_workers: Optional[int] = None
) -> BootstrapComparison:
    """Same scenario with and without the third-party verifier."""
    with_runs = run_trials(config, trials, max_workers)
    without_runs = run_trials(without_verifier(config), trials, max_workers)
    return BootstrapComparison(with_runs, without_runs)


def speedup(comparison: BootstrapComparison) -> Optional[float]:
    """Ratio of mean convergence hours without/with the verifier.

    Runs that never converge count at the end of their horizon.
    """
    def mean_hours(runs: List[ExperimentRun]) -> Optional[float]:
        values = [r.result.summary.mean_convergence_hours_censored for r in runs]
        values = [v for v in values if v is not None]
        return sum(values) / len(values) if values else None

    fast, slow = mean_hours(comparison.with_verifier), mean_hours(comparison.without_verifier)
    if not fast or slow is None:
        return None
    return slow / fast
