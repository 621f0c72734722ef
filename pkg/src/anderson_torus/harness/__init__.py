"""Experiment harness: configs, runs, output files, oracles and the command line."""
from .config import ExperimentConfig, load_config, realization_seed, validate_config
from .experiments import RunResult, run_experiment

__all__ = ["ExperimentConfig", "load_config", "realization_seed", "validate_config",
           "RunResult", "run_experiment"]
