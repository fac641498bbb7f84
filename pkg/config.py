# 🩻 Mask Noise Configuration
#
# Every constant below can be overridden from the environment (or a .env file)
# using the MASKNOISE_ prefix, e.g. MASKNOISE_DEFAULT_SPACING=8.

import os

from dotenv import load_dotenv

load_dotenv()


def _env(name, default, cast=str):
    raw = os.getenv(f"MASKNOISE_{name}")
    if raw is None or raw == "":
        return default
    return cast(raw)


# Logging
LOG_LEVEL = _env("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"

# Parallelism (None = let the executor decide)
WORKERS = _env("WORKERS", None, int)

# Perturbation Settings
DEFAULT_SPACING = _env("DEFAULT_SPACING", 10, int)

# Calibration Settings
DEFAULT_TOLERANCE = _env("DEFAULT_TOLERANCE", 0.005, float)
DEFAULT_SAMPLE_SIZE = _env("DEFAULT_SAMPLE_SIZE", 1000, int)
INITIAL_UPPER_SIGMA = _env("INITIAL_UPPER_SIGMA", 16.0, float)
INITIAL_UPPER_FRACTION = _env("INITIAL_UPPER_FRACTION", 0.5, float)
MAX_EXPANSIONS = _env("MAX_EXPANSIONS", 8, int)
MAX_ITERATIONS = _env("MAX_ITERATIONS", 60, int)
GRID_TARGETS = (0.95, 0.90, 0.85)

# Synthetic Data
DEFAULT_IMAGE_SIZE = _env("DEFAULT_IMAGE_SIZE", 512, int)
DEFAULT_RADIUS = _env("DEFAULT_RADIUS", 100.0, float)
DEFAULT_IRREGULARITY = _env("DEFAULT_IRREGULARITY", 0.15, float)
BLOB_HARMONICS = _env("BLOB_HARMONICS", 5, int)

# Dataset Files
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SLICE_PREFIX = "slice_"
SLICE_PAD = 4
SLICE_EXT = ".png"
FOREGROUND_VALUE = 255
THRESHOLD_8BIT = 127
