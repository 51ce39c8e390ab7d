"""Structure-preserving simulation of a degenerate Cahn-Hilliard cross-diffusion system.

Modules: :mod:`model` (pointwise kernels), :mod:`grid` (finite-volume
operators), :mod:`stepper` (implicit Newton time stepping),
:mod:`galerkin` (spectral cosine backend), :mod:`diagnostics`
(energy, entropy, norms), :mod:`experiments` and :mod:`cli` (drivers).
"""

from .grid import Grid
from .model import RegParams
from .stepper import SolverConfig, State

__all__ = ["Grid", "RegParams", "SolverConfig", "State"]
__version__ = "0.1.0"
