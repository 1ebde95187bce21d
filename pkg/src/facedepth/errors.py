"""Exception hierarchy shared by all facedepth modules."""


class FaceDepthError(Exception):
    """Base class for every error raised by this package."""


class MeshParseError(FaceDepthError):
    """Malformed OBJ input. Carries the 1-based source line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class EmptyMeshError(MeshParseError):
    """OBJ stream defined no faces."""


class ConfigError(FaceDepthError):
    """Invalid configuration value or missing input file."""


class GeometryError(FaceDepthError):
    """Degenerate geometric input (coincident points, singular transform)."""


class ShapeError(FaceDepthError):
    """Array dimensions do not agree."""


class EvaluationError(FaceDepthError):
    """Metric computation cannot proceed (empty mask, nonpositive depth)."""


class AlignmentError(EvaluationError):
    """Prediction alignment failed (degenerate least-squares system)."""


class DepthEncodingError(FaceDepthError):
    """Depth value cannot be represented in the 16-bit encoding, or a
    stored depth image has the wrong bit depth / channel count."""
