import logging
import os

# Log level for engine modules (standard logging level names)
LOG_LEVEL = os.getenv("DAVERPG_LOG_LEVEL", "WARNING").upper()
if LOG_LEVEL not in logging.getLevelNamesMapping():
    raise ValueError(f"DAVERPG_LOG_LEVEL must be a logging level name, got {LOG_LEVEL!r}")

# Verification mode: the simulated master re-anchors x_bar against the
# recomputed weighted average every REANCHOR_EVERY iterations.
VERIFY = os.getenv("DAVERPG_VERIFY", "0").strip().lower() in ("1", "true", "yes", "on")

REANCHOR_EVERY = int(os.getenv("DAVERPG_REANCHOR_EVERY", "1000"))
if REANCHOR_EVERY < 1:
    raise ValueError("DAVERPG_REANCHOR_EVERY must be a positive integer")

# Traces keep per-iteration vectors only for problems up to this dimension
SNAPSHOT_DIM_LIMIT = int(os.getenv("DAVERPG_SNAPSHOT_DIM_LIMIT", "1000"))
if SNAPSHOT_DIM_LIMIT < 1:
    raise ValueError("DAVERPG_SNAPSHOT_DIM_LIMIT must be a positive integer")

# Default artifact directory for experiments
OUTPUT_DIR = os.getenv("DAVERPG_OUTPUT_DIR", "runs")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: str | None = None):
    """Configure root logging once for command-line use"""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)
