"""Python bindings for the symptom inventory crosswalk core."""

from ._symx import (
    DEFAULT_TAU,
    Model,
    NumericError,
    ParseError,
    SymxError,
    TransportError,
    ValidationError,
    VersionError,
    __version__,
    binary_accuracy,
    conversion_distribution,
    convert_score,
    cosine_similarity,
    ema,
    load_inventory,
    mae,
    run_cli,
)

__all__ = [
    "DEFAULT_TAU",
    "Model",
    "NumericError",
    "ParseError",
    "SymxError",
    "TransportError",
    "ValidationError",
    "VersionError",
    "__version__",
    "binary_accuracy",
    "conversion_distribution",
    "convert_score",
    "cosine_similarity",
    "ema",
    "load_inventory",
    "mae",
    "run_cli",
]
