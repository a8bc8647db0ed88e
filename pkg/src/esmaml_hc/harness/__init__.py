"""Configuration, experiment runners and the command-line interface."""

from .config import ConfigValidationError, ExperimentConfig, load, load_preset, parse
from .experiments import emit_plot_data, run

__all__ = ["ConfigValidationError", "ExperimentConfig", "load", "load_preset", "parse",
           "emit_plot_data", "run"]
