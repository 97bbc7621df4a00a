"""Harness: one-call twin composition and scripted experiment bundles."""

from gridtwin.harness.config import (
    TwinConfig,
    TwinConfigError,
    default_config_text,
    load_twin_config,
)
from gridtwin.harness.experiment import (
    BUILTIN_EXPERIMENTS,
    ExperimentError,
    ExperimentScript,
    load_builtin_experiment,
    load_experiment_file,
    run_experiment,
)
from gridtwin.harness.twin import START_ORDER, HealthServer, Twin, TwinError

__all__ = [
    "TwinConfig",
    "TwinConfigError",
    "default_config_text",
    "load_twin_config",
    "BUILTIN_EXPERIMENTS",
    "ExperimentError",
    "ExperimentScript",
    "load_builtin_experiment",
    "load_experiment_file",
    "run_experiment",
    "START_ORDER",
    "HealthServer",
    "Twin",
    "TwinError",
]
