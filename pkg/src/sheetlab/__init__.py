"""Numerical laboratory for local-time calculus of the Brownian sheet."""

from .harness import ExperimentConfig, MCReport, run_experiment
from .sheet import GridSpec, SheetPath, sample_lines, sample_sheet

__all__ = ["GridSpec", "SheetPath", "sample_sheet", "sample_lines", "ExperimentConfig", "MCReport",
           "run_experiment"]
__version__ = "0.1.0"
