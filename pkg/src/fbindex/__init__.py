"""Numerical checks of index bounds for free-boundary CMC surfaces.

Discrete Jacobi spectra (P1 elements), the Whitney 1-form Hodge complex,
harmonic test functions built from ambient frames, and the resulting
eigenvalue comparison and integer index bounds.
"""

from .errors import ConfigError, FBIndexError, GeometryError, MeshError, SolverError

__version__ = "0.1.0"

__all__ = ["FBIndexError", "ConfigError", "MeshError", "GeometryError", "SolverError", "__version__"]
