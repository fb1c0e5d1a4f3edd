"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Container dimensions do not match what an operation requires."""


class FormatError(ValueError):
    """A file (LUVC1 grid, JSON document, PGM/PPM image) is malformed."""


class ScheduleError(ValueError):
    """A compression schedule violates its structural constraints."""


class ProjectorCompatibilityError(ShapeError):
    """Token layout cannot be folded by the pixel-shuffle projector.

    Raised when grid dims are not divisible by the shuffle factor, which is
    exactly what happens to token sets produced by 1D (flat) merging: they
    lose the rectangular structure the projector depends on.
    """
