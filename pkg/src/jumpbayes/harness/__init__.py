"""Configuration, experiment pipeline and command line entry point."""
from .config import ExperimentConfig, config_from_dict, load_config, model_from_file
from .experiment import ExperimentResult, run_experiment

__all__ = ["ExperimentConfig", "config_from_dict", "load_config", "model_from_file",
           "ExperimentResult", "run_experiment"]
