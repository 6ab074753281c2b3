from .config import ExperimentConfig, parse_config_file, parse_config_text, config_from_dict
from .experiments import run, worker_count
from .report import ConvergenceReport, RateFit, emit_report, fit_rate

__all__ = [
    "ExperimentConfig",
    "parse_config_file",
    "parse_config_text",
    "config_from_dict",
    "run",
    "worker_count",
    "ConvergenceReport",
    "RateFit",
    "emit_report",
    "fit_rate",
]
