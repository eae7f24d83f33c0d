"""Collective superradiance and EIT in ensembles of three-level Lambda atoms.

Exact dynamics in the permutation-symmetric subspace, the representative-atom
mean-field model, closed-form EIT and slow-light formulas, and the analysis
tools that compare them.
"""
from .errors import *  # noqa: F401,F403
from .params import ModelParams, eit_params, sr_params
from .symspace import SymmetricBasis, build_basis

__all__ = ["ModelParams", "eit_params", "sr_params", "SymmetricBasis", "build_basis"]
__version__ = "0.1.0"
