from .config import ExperimentConfig, build_experiment, load_experiment, parse_flat
from .plots import emit_plots, export_sample_grid
from .runner import check_run, run_experiment, sweep

__all__ = [
    "ExperimentConfig",
    "build_experiment",
    "check_run",
    "emit_plots",
    "export_sample_grid",
    "load_experiment",
    "parse_flat",
    "run_experiment",
    "sweep",
]
