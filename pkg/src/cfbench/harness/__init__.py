"""Dataset materialization, splitting, orchestration, reports and the CLI."""

from cfbench.harness.config import (
    AXES,
    BenchmarkConfig,
    DataConfig,
    MetricSettings,
    ModelEntry,
    apply_overrides,
    load_config,
)
from cfbench.harness.data import ScanRecord, load_dataset, make_dataset, split_dataset
from cfbench.harness.pipeline import StageCache, run_benchmark
from cfbench.harness.report import emit_report, load_report

__all__ = [
    "AXES",
    "BenchmarkConfig",
    "DataConfig",
    "MetricSettings",
    "ModelEntry",
    "ScanRecord",
    "StageCache",
    "apply_overrides",
    "emit_report",
    "load_config",
    "load_dataset",
    "load_report",
    "make_dataset",
    "run_benchmark",
    "split_dataset",
]
