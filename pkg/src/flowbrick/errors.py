"""Exception types shared across the package."""


class FlowbrickError(Exception):
    """Base class for package-specific errors."""


class ConfigError(FlowbrickError):
    """Bad configuration value, or an unparseable config file."""


class InputFormatError(FlowbrickError):
    """Malformed record in an input file. Carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = "line %d: %s" % (line_no, message)
        super().__init__(message)
        self.line_no = line_no


class StreamOrderError(InputFormatError):
    """Timestamps in the input stream decreased."""


class TailEstimationError(FlowbrickError):
    """Tail-index estimation could not produce a usable estimate."""


class SparseDataError(TailEstimationError):
    """Too few positive entries for the requested block-scale range."""


class DegenerateWindowError(FlowbrickError):
    """A per-window statistic is undefined, e.g. on an all-zero array."""
