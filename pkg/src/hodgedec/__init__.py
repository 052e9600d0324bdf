"""Topology-preserving 5-component Hodge decomposition on Cartesian grids.

The package decomposes 2D/3D vector fields on compact domains defined by
level-set functions into normal-gradient, tangential-curl, normal-harmonic,
tangential-harmonic, and curly-gradient parts, preserving the domain's
cohomology on the grid without any meshing step.
"""

from .grid import CartesianComplex, build_complex, incidence

__version__ = "0.1.0"
