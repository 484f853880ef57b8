"""Deterministic federated-learning simulator with a PCA knowledge hierarchy,
a consensus-paced curriculum over projection dimensionality, and client-side
progressive distillation, plus plain-averaging and ablation baselines."""

from .kernels import BACKEND_NAME

__version__ = "0.1.0"
__all__ = ["BACKEND_NAME", "__version__"]
