#!/usr/bin/env python3
"""
Centralized Logging Configuration for the SMI simulator

One formatter for the engine, the simulator and the CLI. Records logged while
a simulation runs carry the simulated clock next to the wall-clock time, so a
debug trace of one run reads in simulated order.
"""

import contextvars
import logging
import sys
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Optional


# ANSI color codes for console output
class LogColors:
    RESET = "\033[0m"
    DIM = "\033[2m"

    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    BLUE = "\033[34m"
    CYAN = "\033[36m"
    WHITE = "\033[37m"

    BG_RED = "\033[41m"


LEVEL_COLORS = {
    "DEBUG": LogColors.CYAN,
    "INFO": LogColors.GREEN,
    "WARNING": LogColors.YELLOW,
    "ERROR": LogColors.RED,
    "CRITICAL": LogColors.BG_RED + LogColors.WHITE,
}

# Clock of the simulation running in the current thread, if any
_sim_clock: contextvars.ContextVar[Optional[Callable[[], float]]] = contextvars.ContextVar(
    "sim_clock", default=None
)


@contextmanager
def bind_sim_clock(clock: Callable[[], float]) -> Iterator[None]:
    """Stamp every record logged inside the block with clock()."""
    token = _sim_clock.set(clock)
    try:
        yield
    finally:
        _sim_clock.reset(token)


class SimClockFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        clock = _sim_clock.get()
        record.sim_time = clock() if clock is not None else None
        return True


class SmiFormatter(logging.Formatter):
    """Wall time, level, short module path, then the simulated time when a run is active"""

    def __init__(self, use_colors: bool = True):
        super().__init__()
        self.use_colors = use_colors

    def _paint(self, text: str, color: str) -> str:
        return f"{color}{text}{LogColors.RESET}" if self.use_colors else text

    def format(self, record: logging.LogRecord) -> str:
        stamp = datetime.fromtimestamp(record.created).strftime("%H:%M:%S")
        level = self._paint(f"[{record.levelname:8}]", LEVEL_COLORS.get(record.levelname, LogColors.WHITE))
        module = self._paint(f"{record.name.removeprefix('smi_sim.'):28}", LogColors.BLUE)

        sim_time = getattr(record, "sim_time", None)
        clock = f"t={sim_time:>9.0f}s" if sim_time is not None else " " * 12

        line = f"{self._paint(stamp, LogColors.DIM)} {level} {module} {clock} | {record.getMessage()}"
        if record.exc_info:
            line += f"\n{self.formatException(record.exc_info)}"
        return line


def _configure(handler: logging.Handler, level: int, use_colors: bool) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(SmiFormatter(use_colors=use_colors))
    handler.addFilter(SimClockFilter())
    return handler


def setup_logging(
    level: str = "INFO", log_file: Optional[str] = None, console_colors: bool = True
) -> None:
    """
    Route all loggers to stderr and, optionally, a log file

    Calling it again replaces the handlers, so the CLI callback and the
    standalone scripts can both call it.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path to write logs to
        console_colors: Whether to use colors in console output
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    root_logger.handlers.clear()

    # stderr keeps stdout clean for verify/run reports
    root_logger.addHandler(_configure(logging.StreamHandler(sys.stderr), numeric_level, console_colors))

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        root_logger.addHandler(_configure(logging.FileHandler(log_file), numeric_level, False))

    logging.getLogger(__name__).debug(f"Logging initialized - Level: {level}, File: {log_file or 'None'}")


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance for a specific module"""
    return logging.getLogger(name)


def log_run_summary(
    logger: logging.Logger,
    preset: str,
    seed: int,
    summary: Dict[str, Any],
    processing_time: Optional[float] = None,
) -> None:
    """Log the headline numbers of one simulation run"""

    mean_hours = summary.get("mean_convergence_hours")
    mean_str = f"{mean_hours:.1f}h" if mean_hours is not None else "n/a"
    time_str = f" | Wall: {processing_time:.1f}s" if processing_time else ""

    logger.info(
        f"📊 Run '{preset}' seed {seed} complete | "
        f"Converged: {summary.get('converged_count', 0)}/{summary.get('subject_count', 0)} | "
        f"Mean: {mean_str} | NOE: {summary.get('noe_mean', 0):.1f} | "
        f"λ: {summary.get('lambda', 0):.3f}{time_str}"
    )


def log_epoch_outcome(
    logger: logging.Logger,
    owner: str,
    peer: str,
    epoch_index: int,
    outcome: str,
    reason: Optional[str] = None,
) -> None:
    """Log an epoch completion or abort at debug level"""

    status_emoji = {
        "completed": "✅",
        "aborted": "❌",
        "refused": "⏸️",
    }.get(outcome, "❓")

    reason_str = f" | Reason: {reason}" if reason else ""
    logger.debug(
        f"{status_emoji} Epoch {epoch_index} {owner}->{peer} {outcome}{reason_str}"
    )


def log_performance_metric(
    logger: logging.Logger,
    operation: str,
    duration: float,
    items_processed: Optional[int] = None,
    success_count: Optional[int] = None,
    sim_seconds: Optional[float] = None,
) -> None:
    """Log wall time, throughput and how much faster than real time an operation ran"""

    parts = [f"⚡ {operation}", f"Wall: {duration:.2f}s"]
    if items_processed and duration > 0:
        parts.append(f"Rate: {items_processed / duration:.2f}/s")
    if success_count is not None and items_processed:
        parts.append(f"Done: {success_count}/{items_processed}")
    if sim_seconds and duration > 0:
        parts.append(f"Speed-up: {sim_seconds / duration:,.0f}x")
    logger.info(" | ".join(parts))


def log_error_with_context(
    logger: logging.Logger,
    error: Exception,
    context: Dict[str, Any],
    operation: str = "Operation",
) -> None:
    """Log an error with key=value context and its traceback"""

    details = " ".join(f"{k}={v}" for k, v in context.items())
    logger.error(f"❌ {operation} failed [{details}]: {type(error).__name__}: {error}", exc_info=error)
