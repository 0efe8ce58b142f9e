"""Transformed hierarchical models for mixed-type multi-response data.

Gaussian, binomial and count data are mapped to a common continuous latent
scale through conjugate distributional transformations, and a Gaussian mixed
effects model is then fitted to the latent values.
"""

__version__ = "0.1.0"

from .data import MultiResponseDataset, ResponseKind, read_csv, write_csv
from .engine import ChainConfig, ChainOutput, run_algorithm1, run_algorithm2, run_algorithm3
from .samplers import RandomStream
from .sme import SmeModel, SmePriors
from .transform import TransformHyper

__all__ = [
    "ChainConfig", "ChainOutput", "MultiResponseDataset", "RandomStream", "ResponseKind", "SmeModel",
    "SmePriors", "TransformHyper", "read_csv", "run_algorithm1", "run_algorithm2", "run_algorithm3", "write_csv",
]
