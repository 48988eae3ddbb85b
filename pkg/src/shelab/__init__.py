"""Lattice laboratory for the stochastic heat equation with a reaction term.

    du = (1/2) u_xx dt + b(u) dt + sigma(u) dW

Modules: :mod:`model` (drift/diffusion pairs and Osgood checks),
:mod:`lattice` (domains and walk kernels), :mod:`noise` (keyed increments),
:mod:`integrator` (time steppers), :mod:`blowup` (crossings and blowup
estimates), :mod:`experiments` (Monte Carlo drivers) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ContractError,
    ExperimentInvalid,
    ExtrapolationRefused,
    ModelDomainError,
    NumericError,
    ResourceError,
    ShelabError,
)
from .lattice import Boundary, LatticeDomain, kernel_matrix, walk_kernel  # noqa: E402
from .model import ModelSpec, make_model, osgood_integral, osgood_sum, osgood_time  # noqa: E402
from .noise import NoiseSource, coupled_view, refine, site_increment  # noqa: E402
