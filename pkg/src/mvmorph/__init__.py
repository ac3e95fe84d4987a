"""Smooth morphing paths between manifold-valued images."""

from .backend import BACKEND_NAME, HAVE_ACCEL
from .errors import (
    ConvergenceError,
    CutLocusError,
    DegenerateDeformationError,
    InvalidArgumentError,
    MvMorphError,
    RasterParseError,
)
from .manifolds import (
    Circle,
    Euclidean,
    Manifold,
    Product,
    Sphere,
    Spd,
    Tangent,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "HAVE_ACCEL",
    "Circle",
    "ConvergenceError",
    "CutLocusError",
    "DegenerateDeformationError",
    "Euclidean",
    "InvalidArgumentError",
    "Manifold",
    "MvMorphError",
    "Product",
    "RasterParseError",
    "Sphere",
    "Spd",
    "Tangent",
]
