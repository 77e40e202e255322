"""
Simulator defaults and environment settings.

Every tunable a scenario can override lives here so the CLI, the HTTP
service and the tests agree on the same baseline.
"""

import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Trust model
DEFAULT_WINDOW_SIZE = 50
DEFAULT_GAMMA = 4.0
DEFAULT_REGEN_RATE = 0.2  # per second
DEFAULT_DEGRADATION = 0.4

# Routing
DEFAULT_MAX_PATHS = 3
DEFAULT_ROUTE_LIFETIME = 10.0  # seconds
DEFAULT_RREQ_TTL = 16
DEFAULT_RREQ_RETRY = 1.0  # seconds
DEFAULT_REPLENISH_INTERVAL = 1.0  # seconds
DEFAULT_CONTROL_RETRIES = 7

# Data plane
DEFAULT_BATCH_SIZE = 20
DEFAULT_TRANSMISSION_TIME = 0.1  # seconds
DEFAULT_TIMEOUT_EPSILON = 0.1  # fraction of t

# Energy
DEFAULT_BATTERY_LEVEL = 1.0
DEFAULT_BATTERY_PERIOD = 5.0  # seconds
DEFAULT_IDLE_DRAIN = 1e-4  # per second
DEFAULT_TX_COST = 1e-3  # per transmission

# Reporting
DEFAULT_SAMPLE_PERIOD = 5.0  # seconds
SIGNIFICANT_DIGITS = 6

OUTPUT_DIR = os.getenv('MANET_OUTPUT_DIR', 'results')
SCENARIO_DIR = 'scenarios'
LOG_LEVEL = 'WARNING'


def setup_logging(level=None):
    """Configure root logging once for scripts and the service"""
    logging.basicConfig(
        level=getattr(logging, str(level or LOG_LEVEL).upper(), logging.WARNING),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def default_output_dir():
    """Output directory from the environment, re-read so tests can patch it"""
    return os.getenv('MANET_OUTPUT_DIR', OUTPUT_DIR)
