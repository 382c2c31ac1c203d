# src/smi_sim/services/metrics_service.py
"""
Run artifacts: summary.json, plot-ready CSVs and the optional transcript.

Nothing written here depends on wall-clock time, so the same (preset, seed)
produces byte-identical files whatever the thread count.
"""

import os
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import orjson
import pandas as pd

from smi_sim.core.exceptions import OutputDirError
from smi_sim.services.experiment_service import BootstrapComparison, ExperimentRun
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)

SCORE_COLUMNS = ["observer_id", "peer_id", "sim_time_s", "score", "f1", "f2", "epoch_index"]
CONVERGENCE_COLUMNS = [
    "node_id",
    "role",
    "model",
    "converged",
    "convergence_time_s",
    "convergence_hours",
    "noe",
    "epochs_completed",
    "epochs_aborted",
    "priority",
    "batch",
]


def ensure_output_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputDirError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OutputDirError(f"output directory {path} is not writable")
    return path


def _dump_json(path: Path, payload: Dict[str, Any]) -> None:
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))


def summary_payload(run: ExperimentRun) -> Dict[str, Any]:
    return {
        "summary": run.result.summary.model_dump(mode="json", by_alias=True),
        "config": run.config.model_dump(mode="json"),
        "weights": run.weights.model_dump(mode="json"),
        "policy": run.policy.model_dump(mode="json"),
        "audit": run.result.audit.by_action(),
    }


def scores_frame(run: ExperimentRun) -> pd.DataFrame:
    rows = [s.model_dump() for s in run.result.samples]
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def convergence_frame(run: ExperimentRun) -> pd.DataFrame:
    rows = []
    for node in run.result.summary.nodes:
        row = node.model_dump()
        row["convergence_hours"] = node.convergence_hours
        rows.append(row)
    return pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)


def noe_by_model_frame(runs: List[ExperimentRun]) -> pd.DataFrame:
    rows = []
    for run in runs:
        for model, noe in sorted(run.result.summary.noe_by_model.items()):
            rows.append({"seed": run.config.seed, "model": model, "noe_mean": noe})
    return pd.DataFrame(rows, columns=["seed", "model", "noe_mean"])


def write_run(run: ExperimentRun, out_dir: Path) -> List[Path]:
    """Write one run's artifacts into out_dir; returns the files written."""
    ensure_output_dir(out_dir)
    written = []

    summary_path = out_dir / "summary.json"
    _dump_json(summary_path, summary_payload(run))
    written.append(summary_path)

    scores_path = out_dir / "scores.csv"
    scores_frame(run).to_csv(scores_path, index=False)
    written.append(scores_path)

    convergence_path = out_dir / "convergence.csv"
    convergence_frame(run).to_csv(convergence_path, index=False)
    written.append(convergence_path)

    if run.config.world.model_mix:
        noe_path = out_dir / "noe_by_model.csv"
        noe_by_model_frame([run]).to_csv(noe_path, index=False)
        written.append(noe_path)

    if run.config.trace:
        transcript_path = out_dir / "transcript.jsonl"
        with open(transcript_path, "wb") as handle:
            for record in run.result.transcript:
                handle.write(orjson.dumps(record.model_dump(), option=orjson.OPT_SORT_KEYS))
                handle.write(b"\n")
        written.append(transcript_path)

    logger.info(f"💾 Wrote {len(written)} artifacts to {out_dir}")
    return written


def aggregate_payload(runs: List[ExperimentRun]) -> Dict[str, Any]:
    summaries = [r.result.summary for r in runs]
    hours = [s.mean_convergence_hours for s in summaries if s.mean_convergence_hours is not None]
    noe = [s.noe_mean for s in summaries if s.converged_count]
    return {
        "name": runs[0].config.name,
        "config_hash": runs[0].config.config_hash(),
        "version": summaries[0].version,
        "seeds": [s.seed for s in summaries],
        "mean_convergence_hours": float(np.mean(hours)) if hours else None,
        "std_convergence_hours": float(np.std(hours)) if hours else None,
        "noe_mean": float(np.mean(noe)) if noe else None,
        "lambda_mean": float(np.mean([s.lambda_ for s in summaries])),
        "converged_total": sum(s.converged_count for s in summaries),
        "subject_total": sum(s.subject_count for s in summaries),
    }


def write_trials(runs: List[ExperimentRun], out_dir: Path) -> List[Path]:
    """One run writes straight into out_dir; several get seed-<n>/ and aggregate.json."""
    if not runs:
        return []
    if len(runs) == 1:
        return write_run(runs[0], out_dir)

    ensure_output_dir(out_dir)
    written: List[Path] = []
    for run in runs:
        written.extend(write_run(run, out_dir / f"seed-{run.config.seed}"))

    aggregate_path = out_dir / "aggregate.json"
    _dump_json(aggregate_path, aggregate_payload(runs))
    written.append(aggregate_path)

    if runs[0].config.world.model_mix:
        noe_path = out_dir / "noe_by_model.csv"
        noe_by_model_frame(runs).to_csv(noe_path, index=False)
        written.append(noe_path)
    return written


def bootstrap_frame(comparison: BootstrapComparison) -> pd.DataFrame:
    rows = []
    for fast, slow in zip(comparison.with_verifier, comparison.without_verifier):
        with_h = fast.result.summary.mean_convergence_hours_censored
        without_h = slow.result.summary.mean_convergence_hours_censored
        rows.append(
            {
                "seed": fast.config.seed,
                "with_verifier_hours": with_h,
                "without_verifier_hours": without_h,
                "speedup": without_h / with_h if with_h and without_h is not None else None,
            }
        )
    return pd.DataFrame(rows, columns=["seed", "with_verifier_hours", "without_verifier_hours", "speedup"])


def write_bootstrap(comparison: BootstrapComparison, out_dir: Path) -> List[Path]:
    written = write_trials(comparison.with_verifier, out_dir)
    written.extend(write_trials(comparison.without_verifier, out_dir / "no-verifier"))
    path = out_dir / "bootstrap.csv"
    bootstrap_frame(comparison).to_csv(path, index=False)
    written.append(path)
    return written
