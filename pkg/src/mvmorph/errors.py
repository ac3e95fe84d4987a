"""Exception types shared across the package."""


class MvMorphError(Exception):
    """Base class for all mvmorph errors."""


class InvalidArgumentError(MvMorphError, ValueError):
    """An argument violates a documented precondition."""


class CutLocusError(MvMorphError):
    """The logarithm map was requested at (or across) the cut locus."""


class ConvergenceError(MvMorphError):
    """An iterative solver exhausted its iteration budget.

    Carries the last iterate so callers can inspect or recover it.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateDeformationError(MvMorphError):
    """A composed deformation left the image domain by more than one pixel."""


class RasterParseError(MvMorphError):
    """A raster file failed validation while being read."""
