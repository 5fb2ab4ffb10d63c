"""Adversarial forensics on small neural classifiers.

Train a zoo of MLPs, attack them with gradient-based evasion attacks, and ask
what a random forest can read off the attacked output vectors: whether an
output was attacked, which model produced it and which attack family did it.
"""

__version__ = "0.1.0"

from .attacks import AttackConfig, AttackResult, default_configs, run_attack
from .forest import ForestModel, ForestParams, fit_forest, predict_forest
from .metrics import MetricsReport, compute_metrics
from .nn import NeuralModel, Sample, forward, input_gradient, predict_class, train
from .numcore import Rng
from .pipeline import CampaignConfig, PredictionRecord, QuestionReport

__all__ = [
    "AttackConfig", "AttackResult", "CampaignConfig", "ForestModel", "ForestParams",
    "MetricsReport", "NeuralModel", "PredictionRecord", "QuestionReport", "Rng", "Sample",
    "compute_metrics", "default_configs", "fit_forest", "forward", "input_gradient",
    "predict_class", "predict_forest", "run_attack", "train",
]
