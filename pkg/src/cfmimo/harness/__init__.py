from .experiments import KINDS, ExperimentSpec, default_grid, run_experiment
from .output import Table, write_results

__all__ = ["KINDS", "ExperimentSpec", "Table", "default_grid", "run_experiment",
           "write_results"]
