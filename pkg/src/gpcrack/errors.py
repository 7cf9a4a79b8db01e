"""Exception types raised by gpcrack."""


class GpcrackError(Exception):
    """Base class for all package errors."""


class ParseError(GpcrackError):
    """Malformed mesh, surface or config file."""


class ValidationError(GpcrackError):
    """Structurally invalid mesh (inverted tet, bad crack face, empty Dirichlet part)."""


class TopologyError(GpcrackError):
    """Requested crack faces are not part of the candidate surface."""


class DomainError(GpcrackError):
    """Derivative requested on the region where the density is infinite."""


class GeometryError(GpcrackError):
    """Degenerate triangle in a varifold."""


class NonManifoldError(GpcrackError):
    """An edge is shared by more than two triangles."""


class ResolutionError(GpcrackError):
    """Voxel grid would exceed the memory cap."""


class NoFeasibleCandidate(GpcrackError):
    """Every crack candidate failed the admissibility checks."""
