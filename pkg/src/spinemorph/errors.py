"""Exception types raised by the morphometry pipeline."""


class SpineMorphError(Exception):
    """Base class for all package errors."""


class MeshParseError(SpineMorphError):
    """A mesh file is malformed or truncated."""


class DegenerateMeshError(SpineMorphError):
    """A mesh has too few vertices or faces to be usable."""


class DegenerateGeometryError(SpineMorphError):
    """Geometry is rank deficient for the requested operation."""


class TooFewPointsError(SpineMorphError):
    pass


class CoincidentPointsError(SpineMorphError):
    pass


class DegenerateFrameError(SpineMorphError):
    pass


class EmptyBodyError(SpineMorphError):
    """Cutting left nothing on the anterior side."""


class EndplateNotFoundError(SpineMorphError):
    pass


class NoIntersectionError(SpineMorphError):
    pass


class InvalidSpecError(SpineMorphError, ValueError):
    pass


class ManifestError(SpineMorphError):
    pass


class SchemaError(SpineMorphError, ValueError):
    """Tabular input is missing required columns or has bad values."""


class NoOverlapError(SpineMorphError):
    pass


class InsufficientDataError(SpineMorphError, ValueError):
    pass
