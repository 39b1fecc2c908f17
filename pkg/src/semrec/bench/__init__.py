"""Experiment orchestration, synthetic data, oracle and degradation sweeps."""

from .config import STANDARD_VARIANTS, VARIANTS, ExperimentConfig, load_config, make_config
from .degrade import degrade_representation
from .oracle import brute_force_oracle
from .runner import RunOutputs, run_experiment
from .synthetic import SyntheticData, SyntheticSpec, generate_synthetic, synthetic_view

__all__ = [
    "STANDARD_VARIANTS", "VARIANTS", "ExperimentConfig", "RunOutputs", "SyntheticData",
    "SyntheticSpec", "brute_force_oracle", "degrade_representation", "generate_synthetic",
    "load_config", "make_config", "run_experiment", "synthetic_view",
]
