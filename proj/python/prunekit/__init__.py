"""Filter pruning of CNNs with per-layer sensitivity analysis."""

from ._core import (
    FormatError,
    Model,
    NumericError,
    PlanError,
    ShapeError,
    build,
    format_fixed2,
    load_dataset,
    run_cli,
    sha256_file,
    version,
)

__all__ = [
    "FormatError",
    "Model",
    "NumericError",
    "PlanError",
    "ShapeError",
    "build",
    "format_fixed2",
    "load_dataset",
    "run_cli",
    "sha256_file",
    "version",
]
__version__ = version()
