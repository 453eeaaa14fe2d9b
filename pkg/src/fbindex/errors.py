"""Exception hierarchy shared by all modules.

The CLI maps each family to a fixed exit code, so raise the most specific
class that applies.
"""


class FBIndexError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(FBIndexError):
    exit_code = 2


class MeshError(FBIndexError):
    """Malformed, non-manifold or non-orientable input."""

    exit_code = 3


class GeometryError(FBIndexError):
    """A geometric precondition failed (free boundary, container fit, CMC)."""

    exit_code = 3


class SolverError(FBIndexError):
    """Eigensolver non-convergence or an undecidable rank/threshold."""

    exit_code = 5
