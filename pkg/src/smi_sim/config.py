# src/smi_sim/config.py
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

PACKAGE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    # Process-level settings. Per-run knobs live in domain.schemas.RunConfig.
    # Every field maps to an SMI_* environment variable, e.g. SMI_SIM_THREADS.
    model_config = SettingsConfigDict(
        env_prefix="SMI_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # --- Worker pool ---
    # Upper bound on threads used for independent seeds. 0 means "use PARALLEL_WORKERS".
    sim_threads: int = 0

    # --- Logging ---
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # --- Storage ---
    output_dir: str = "output"
    preset_dir: str = str(PACKAGE_DIR / "presets")


settings = Settings()

# Number of worker threads for parallel seed execution when SMI_SIM_THREADS is unset
PARALLEL_WORKERS = 4

# --- Protocol defaults ---
EXCHANGES_PER_EPOCH = 24  # k
EPOCH_LENGTH_S = 24 * 3600
EXCHANGE_INTERVAL_S = 3600
DIALING_GRACE_S = 600  # first exchange slot offset after dialing starts
APERIODIC_JITTER_FRACTION = 0.5  # jittered slots land within this share of an interval
MAX_RETRIES = 3
RETRY_BASE_DELAY_S = 60
RESTART_DELAY_S = 2 * EXCHANGE_INTERVAL_S
DIALING_FRESHNESS_S = 3600
TRUSTED_LOCATION_TTL_S = 3600
NONCE_BYTES = 128  # 1024-bit dialing parameters
SECURITY_BITS = 128  # Ed25519 / X25519, at least the strength of RSA-2048

# --- Channel defaults ---
SMS_SEGMENT_CHARS = 160
SMS_DELAY_PER_SEGMENT_S = 7.4
DATA_DELAY_S = 0.5
PROXIMITY_DELAY_S = 0.5

# --- Reputation defaults ---
ALPHA = 0.8
W_UNTRUSTED = 2.0
W_TRUSTED = 5.0
GAMMA = 1.0
DELTA = 10.0
PROOF_UNIT = 100.0
EPOCHS_REQUIRED = 3  # L
PER_EPOCH_TARGET = 1680.0
P_DESIGN = 0.1
TRUSTED_UNIQUENESS_WINDOW_S = 2 * EPOCH_LENGTH_S
REVOCATION_FRACTION = 0.2
LIVENESS_EPOCHS = 3
DECAY_AFTER_IDLE_EPOCHS = 3
INACTIVITY_FRACTION = 0.5
SCORE_RELATIVE_TOLERANCE = 1e-9

# --- Scheduler defaults ---
PRIORITY_LEVELS = 10
BATCH_SIZE = 25
QUOTA_OVERRUN_ALLOWANCE = 0.1
BACKOFF_DECREASE = 0.5
BACKOFF_INCREASE = 0.05
BACKOFF_FLOOR = 1.0 / 64
BACKOFF_DELAY_THRESHOLD_S = 60.0

# --- World defaults ---
GRID_SIDE_M = 1.0e5
ZONE_SIDE_M = 1.0e4
MEAN_SPEED_MPS = 6.2586  # 14 mph
MOBILITY_STEP_S = 300
PROB_WALK_TURN_PROBABILITY = 0.3
MANHATTAN_TURN_PROBABILITY = 0.5
MANHATTAN_BLOCK_M = 200.0
DOWNTOWN_DWELL_TARGET = 0.7
DOWNTOWN_SPEED_FACTOR = 0.5
PROXIMITY_RADIUS_M = 30.0

# --- Simulation guards ---
MAX_EVENTS_PER_SIM_SECOND = 10_000
