"""One-dimensional re-wetting of cementitious material with silicate hydration and gel clogging."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    InvalidParameterError,
    RewetError,
    SolverError,
)
from .parameters import MIXTURES, PRESET_NAMES, ParameterSet, preset  # noqa: E402

__all__ = [
    "ConfigError",
    "InvalidParameterError",
    "MIXTURES",
    "PRESET_NAMES",
    "ParameterSet",
    "RewetError",
    "SolverError",
    "__version__",
    "preset",
]
