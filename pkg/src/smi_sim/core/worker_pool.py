# src/smi_sim/core/worker_pool.py
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

from smi_sim.config import PARALLEL_WORKERS, settings
from smi_sim.utils.logging import get_logger, log_error_with_context, log_performance_metric

logger = get_logger(__name__)

T = TypeVar("T")


def worker_count(jobs: int, requested: Optional[int] = None) -> int:
    """Threads to use: SMI_SIM_THREADS caps the pool when set."""
    cap = requested or settings.sim_threads or PARALLEL_WORKERS
    return max(1, min(cap, jobs))


def run_seeds(
    job: Callable[[int], T],
    seeds: Sequence[int],
    max_workers: Optional[int] = None,
) -> List[T]:
    """Run job(seed) for every seed, one deterministic run per worker.

    Runs share no state; results come back in seed order whatever the
    completion order.
    """
    if not seeds:
        return []
    workers = worker_count(len(seeds), max_workers)
    started = time.perf_counter()
    logger.info(f"🔄 Running {len(seeds)} seeds on {workers} workers")

    results: Dict[int, T] = {}
    if workers == 1:
        for seed in seeds:
            results[seed] = job(seed)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            future_to_seed = {executor.submit(job, seed): seed for seed in seeds}
            for future in as_completed(future_to_seed):
                seed = future_to_seed[future]
                try:
                    results[seed] = future.result()
                except Exception as exc:
                    log_error_with_context(logger, exc, {"seed": seed}, "Simulation run")
                    raise

    log_performance_metric(logger, "Seed batch", time.perf_counter() - started, len(seeds), len(results))
    return [results[seed] for seed in sorted(results)]
