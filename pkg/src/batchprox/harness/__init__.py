"""Benchmark harness: configs, sweeps, CSV/SVG emission, lower-bound labs."""

from .config import (  # noqa: F401
    ConfigError,
    MethodSpec,
    PRESETS,
    ProblemSpec,
    SweepConfig,
    load_config,
    preset,
)
from .lab import orthcol_lab, twopoint_lab  # noqa: F401
from .results import (  # noqa: F401
    CSV_HEADER,
    CellResult,
    read_csv,
    rows_as_dicts,
    write_csv,
    write_profile_csv,
    write_speedup_csv,
)
from .svg import Plot, Series, emit_svg  # noqa: F401
from .sweep import execute_sweep, stable_seed  # noqa: F401
