"""Linear and Kerr-nonlinear physics of a two-dimensional passive optical fiber network.

The network is a square array of four-port nodes joined by fibers, with
polarization-dependent flux per plaquette.  Modules:

``netmodel``    node scattering and the linear operators of each geometry
``linspec``     closed-network spectra, bands, gaps and edge modes
``drive``       driven linear response of open cylinder and plane
``kerrsteady``  Kerr steady states and their continuation
``fpcavity``    analytic nonlinear Fabry-Perot cavity
``fluct``       Bogoliubov fluctuations, stability and squeezing spectra
``rootfind``    zeros of analytic determinants by the argument principle
``cli``         command-line entry point
"""

from .config import ConfigError, Geometry, NetworkConfig, load_config, validate_mapping
from .netmodel import (
    IndexMap,
    LinearAssembly,
    NodeSMatrix,
    Sector,
    apply_imperfections,
    assemble_closed,
    assemble_plane,
    kx_grid,
    node_smatrix,
)

from . import drive, fluct, fpcavity, kerrsteady, linspec, netmodel, rootfind

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Geometry",
    "NetworkConfig",
    "load_config",
    "validate_mapping",
    "IndexMap",
    "LinearAssembly",
    "NodeSMatrix",
    "Sector",
    "apply_imperfections",
    "assemble_closed",
    "assemble_plane",
    "kx_grid",
    "node_smatrix",
    "__version__",
]
