# src/errors.py
"""
Exception hierarchy for the FLARE surrogate toolkit.

Every error raised on purpose by the package derives from FlareError so the CLI
can turn it into a one-line diagnostic. Errors describing a bad argument value
also derive from ValueError.
"""


class FlareError(Exception):
    """Base class for all FLARE errors."""


# Geometry
class GeometryError(FlareError, ValueError):
    """Invalid ring or domain description."""


class PointNotInRing(GeometryError):
    """A physical point lies in the spoke gap or outside the part."""


class UnitRadiusOutOfBand(GeometryError):
    """A unit-space point lies outside both radial bands or outside 0 <= z_u <= 1."""


# Arrays and networks
class ShapeMismatch(FlareError, ValueError):
    """Array shapes disagree with the architecture or with each other."""


class LengthMismatch(FlareError, ValueError):
    """Flat vectors have inconsistent lengths."""


class NonFiniteLoss(FlareError, FloatingPointError):
    """The loss or its gradient overflowed or became NaN."""


# Solvers and training
class SolverDivergence(FlareError, RuntimeError):
    """An iterative solver hit its iteration cap without meeting the KKT tolerance."""


class ConfigError(FlareError, ValueError):
    """Inconsistent training or run configuration."""


# Baselines and metrics
class DegenerateQuery(FlareError, ValueError):
    """A query parameter vector has zero norm after normalisation."""


class DegenerateTargets(FlareError, ValueError):
    """Targets have zero (weighted) variance, so R^2 is undefined."""


class SingleClass(FlareError, ValueError):
    """A classifier was given labels from a single class."""


# Data
class InsufficientData(FlareError, ValueError):
    """The dataset is too small for the requested operation."""


class InvalidSplit(FlareError, ValueError):
    """A train/test split assigns one sample id to both sides."""


class FormatError(FlareError, ValueError):
    """A file on disk is malformed or truncated."""


class VersionMismatch(FormatError):
    """A file on disk was written with an unsupported format version."""
