"""Variational data assimilation with a Voronoi-tessellation CNN inverse operator."""

from .assimilation import AssimilationProblem, blue_analysis, blue_augmented, minimize, scalar_posterior
from .config import ExperimentConfig, load_config
from .fields import evaluate, r_rmse, ssim
from .lbfgs import SolverConfig

__all__ = [
    "AssimilationProblem",
    "ExperimentConfig",
    "SolverConfig",
    "blue_analysis",
    "blue_augmented",
    "evaluate",
    "load_config",
    "minimize",
    "r_rmse",
    "scalar_posterior",
    "ssim",
]
