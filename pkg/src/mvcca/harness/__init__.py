"""Synthetic data, baselines, experiment protocol, file formats and CLI."""

from .baselines import StructuralLearning, structural_learning_embed
from .dataset import Dataset, dataset_from_synth, proportional_splits
from .experiment import ExperimentConfig, ExperimentReport, reference_config, run_experiment
from .synth import SynthConfig, SynthData, generate_three_view

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ExperimentReport",
    "StructuralLearning",
    "SynthConfig",
    "SynthData",
    "dataset_from_synth",
    "generate_three_view",
    "proportional_splits",
    "reference_config",
    "run_experiment",
    "structural_learning_embed",
]
