"""Lattice and continuum numerics for the two-variable function Omega of the
fermionic basis: Bethe states, kernels, DDV solutions, the continuum
resolvents and the alpha-shift identity suite."""

from . import continuum, kernels, lattice, nlie, numerics
from .errors import OmegaLabError
from .kernels import ModelParams

__version__ = "0.1.0"

__all__ = ["continuum", "kernels", "lattice", "nlie", "numerics", "ModelParams", "OmegaLabError", "__version__"]
