# src/smi_sim/main.py
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from smi_sim import __version__
from smi_sim.config import settings
from smi_sim.core.exceptions import OutputDirError, PresetNotFoundError, SmiError
from smi_sim.services import experiment_service, metrics_service, preset_service
from smi_sim.services.verification_service import run_checks
from smi_sim.utils.logging import get_logger, setup_logging

EXIT_FAILED = 1
EXIT_UNKNOWN_PRESET = 2
EXIT_UNWRITABLE_OUTPUT = 3

app = typer.Typer(
    name="smi-sim",
    help="Repetitive spatio-temporal key exchange: simulator and analytic checks.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console(highlight=False, soft_wrap=True)
logger = get_logger(__name__)


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides SMI_LOG_LEVEL."),
):
    # Initialize logging first
    setup_logging(log_level or settings.log_level, settings.log_file)


def _fail(message: str, code: int) -> typer.Exit:
    console.print(f"[red]error:[/red] {escape(message)}")
    return typer.Exit(code)


def _overrides(sets: List[str]) -> list:
    try:
        return [preset_service.parse_override(text) for text in sets]
    except ValueError as exc:
        raise _fail(str(exc), EXIT_FAILED)


def _summary_table(runs: List[experiment_service.ExperimentRun], title: str) -> Table:
    table = Table(title=title)
    for column in ("seed", "converged", "mean h", "NOE", "λ", "epochs ok/aborted", "Δ"):
        table.add_column(column, justify="right")
    for run in runs:
        s = run.result.summary
        mean = f"{s.mean_convergence_hours:.1f}" if s.mean_convergence_hours is not None else "-"
        table.add_row(
            str(s.seed),
            f"{s.converged_count}/{s.subject_count}",
            mean,
            f"{s.noe_mean:.1f}",
            f"{s.lambda_:.3f}",
            f"{s.epochs_completed}/{s.epochs_aborted}",
            f"{s.threshold:.1f}",
        )
    return table


@app.command()
def run(
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named scenario preset."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Flat YAML file of dotted keys."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed."),
    nodes: Optional[int] = typer.Option(None, "--nodes", help="Number of simulated devices."),
    days: Optional[float] = typer.Option(None, "--days", help="Simulated duration in epochs."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory."),
    trials: int = typer.Option(1, "--trials", min=1, help="Independent seeds to run."),
    trace: bool = typer.Option(False, "--trace", help="Write transcript.jsonl."),
    sets: List[str] = typer.Option([], "--set", help="Dotted override, e.g. protocol.k=12."),
):
    """Run a scenario and write summary.json plus plot-ready CSVs."""
    overrides = _overrides(sets)
    for key, value in (("seed", seed), ("node_count", nodes), ("duration_days", days)):
        if value is not None:
            overrides.append((key, value))
    if trace:
        overrides.append(("trace", True))

    try:
        run_config = preset_service.resolve_config(
            preset or (None if config else "baseline"), config, overrides
        )
    except PresetNotFoundError as exc:
        raise _fail(str(exc), EXIT_UNKNOWN_PRESET)
    except (ValidationError, ValueError, OSError) as exc:
        raise _fail(f"invalid configuration: {exc}", EXIT_FAILED)

    out_dir = out or Path(settings.output_dir) / run_config.name
    try:
        metrics_service.ensure_output_dir(out_dir)
    except OutputDirError as exc:
        raise _fail(str(exc), EXIT_UNWRITABLE_OUTPUT)

    try:
        if run_config.verifier.enabled and run_config.verifier.compare_without:
            comparison = experiment_service.run_bootstrap_comparison(run_config, trials)
            metrics_service.write_bootstrap(comparison, out_dir)
            console.print(_summary_table(comparison.with_verifier, "with verifier"))
            console.print(_summary_table(comparison.without_verifier, "without verifier"))
            factor = experiment_service.speedup(comparison)
            if factor is not None:
                console.print(f"bootstrap speed-up: {factor:.1f}x")
        else:
            runs = experiment_service.run_trials(run_config, trials)
            metrics_service.write_trials(runs, out_dir)
            console.print(_summary_table(runs, run_config.name))
    except OutputDirError as exc:
        raise _fail(str(exc), EXIT_UNWRITABLE_OUTPUT)
    except SmiError as exc:
        raise _fail(f"{type(exc).__name__}: {exc}", EXIT_FAILED)

    console.print(f"artifacts written to {out_dir}")


@app.command()
def verify(
    preset: Optional[str] = typer.Option(None, "--preset", help="Check a preset's weights."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Flat YAML file of dotted keys."),
    sets: List[str] = typer.Option([], "--set", help="Dotted override, e.g. reputation.alpha=0.7."),
    p_values: List[float] = typer.Option([], "--p", help="Also print l(p) for this p."),
):
    """Run the analytic self-checks and print PASS/FAIL per check."""
    overrides = _overrides(sets)
    try:
        run_config = preset_service.resolve_config(preset, config, overrides)
    except PresetNotFoundError as exc:
        raise _fail(str(exc), EXIT_UNKNOWN_PRESET)
    except ValidationError as exc:
        first = exc.errors()[0]
        console.print(f"[red]FAIL[/red] weights: {escape(first['msg'])}")
        raise typer.Exit(EXIT_FAILED)
    except (ValueError, OSError) as exc:
        raise _fail(f"invalid configuration: {exc}", EXIT_FAILED)

    results = run_checks(run_config, p_values)
    for result in results:
        status = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"
        console.print(f"{status} {result.name}: {escape(result.detail)}")
    if not all(r.passed for r in results):
        raise typer.Exit(EXIT_FAILED)


@app.command()
def presets():
    """List the bundled scenario presets."""
    for name in preset_service.list_presets():
        flat = preset_service.load_preset(name)
        console.print(f"{name}: {flat.get('description', '')}")


@app.command()
def version():
    console.print(f"smi-sim {__version__}")


if __name__ == "__main__":
    app()
