"""Exception types shared across the package."""


class AdameshError(Exception):
    """Base class for all package errors."""


class GeometryError(AdameshError):
    """Invalid or inconsistent geometry definition."""


class MeshError(AdameshError):
    """Invalid mesh topology or data."""


class MeshGenerationError(AdameshError):
    """Mesh generation failed (bad sizing field, budget exceeded, ...)."""


class NumericalError(AdameshError):
    """A numerical routine failed to reach its accuracy contract."""
