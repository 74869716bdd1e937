"""Experiment drivers and the command-line interface."""

from .cli import main
from .config import ConfigError, load_config
from .experiments import (
    RUNNERS,
    AuditFailure,
    NonConvergence,
    RunReport,
    run_audit,
    run_barycenter,
    run_feature_unlearn,
    run_forget_gaussian,
    run_unlearn_classifier,
)

__all__ = [
    "RUNNERS",
    "AuditFailure",
    "ConfigError",
    "NonConvergence",
    "RunReport",
    "load_config",
    "main",
    "run_audit",
    "run_barycenter",
    "run_feature_unlearn",
    "run_forget_gaussian",
    "run_unlearn_classifier",
]
