"""Exception hierarchy for the depth pipeline."""


class XMapsError(Exception):
    """Base class for all pipeline errors."""


class DimensionMismatchError(XMapsError, ValueError):
    """Inputs that must share a grid or resolution do not."""


class GeometryError(XMapsError):
    """Degenerate calibration, invalid disparity or pixel outside the sensor."""


class TimeMapError(XMapsError):
    """A time map operation could not be carried out on its input."""


class SimulationError(XMapsError):
    """The simulated scene cannot be rendered for the given rig."""


class FormatError(XMapsError):
    """A file could not be parsed."""


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """The file ends before the announced payload."""


class UnsortedEventsError(FormatError):
    """Event timestamps in a file are not non-decreasing."""


class MapKindError(FormatError):
    """A map file holds a different kind of map than requested."""


class CalibrationFileError(FormatError):
    """A calibration file is missing keys or holds invalid values."""


class MetricsError(XMapsError):
    """A metric is undefined for its input (empty overlap, degenerate point set)."""
