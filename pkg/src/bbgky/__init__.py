"""Cumulant expansions of BBGKY hierarchies for interacting Markov jump entities.

Submodules
----------
combinatorics
    Set partitions, Stirling numbers and cluster transforms.
state_space
    Discretized entity space, tensor functions, sequences, norms and pairing.
dynamics
    Kernels, generators, semigroups and a Gillespie sampler.
hierarchies
    Cumulants of semigroups, the BBGKY groups and their generators.
meanfield
    Mean-field limit operators, Vlasov hierarchies and the kinetic equation.
cli
    Config-driven runs, the verification suite and parameter sweeps.
"""
from . import combinatorics, dynamics, hierarchies, meanfield, state_space
from .dynamics import JumpModel, KernelSet, catalog, random_kernels
from .state_space import EntitySpace, SequenceVector, pair

__version__ = "0.1.0"

__all__ = [
    "combinatorics",
    "state_space",
    "dynamics",
    "hierarchies",
    "meanfield",
    "EntitySpace",
    "SequenceVector",
    "pair",
    "KernelSet",
    "JumpModel",
    "catalog",
    "random_kernels",
    "__version__",
]
