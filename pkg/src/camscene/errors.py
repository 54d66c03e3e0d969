"""Exception hierarchy shared across the toolkit.

ValidationError subclasses signal bad inputs / violated preconditions;
ParseError subclasses signal malformed external files and always carry
enough position context to locate the problem.
"""


class CamsceneError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CamsceneError):
    """A precondition or domain invariant was violated."""


class InvalidPoseError(ValidationError):
    pass


class InvalidIntrinsicsError(ValidationError):
    pass


class InvalidTrajectoryError(ValidationError):
    pass


class InvalidScaleError(ValidationError):
    pass


class AmbiguousRotationError(ValidationError):
    """Rotation interpolation between antipodal endpoints has no unique arc."""


class InvalidKernelError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class NoObservationsError(ValidationError):
    pass


class AlignmentFailedError(ValidationError):
    pass


class RejectedAlignmentError(ValidationError):
    pass


class DegenerateSceneScaleError(ValidationError):
    def __init__(self, which: str, message: str | None = None):
        self.which = which
        super().__init__(message or f"scene scale of the {which} trajectory is zero")


class NumericalFloorError(ValidationError):
    pass


class ParseError(CamsceneError):
    """Malformed external data; carries a line (1-based) or byte offset."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (byte {offset})"
        super().__init__(message + where)


class RasterFormatError(ParseError):
    pass
