"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, misuse,
malformed files) and ``NumericalError`` (degenerate geometry, failed
convergence). The CLI maps them to exit codes 1 and 2.
"""


class LaserforgeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LaserforgeError, ValueError):
    pass


class NumericalError(LaserforgeError, ArithmeticError):
    pass


# numerics
class NonFinite(NumericalError):
    pass


class DimensionError(ValidationError):
    pass


class RankDeficient(NumericalError):
    pass


class SingularNormalEquations(NumericalError):
    pass


# geometry
class Degenerate(NumericalError):
    pass


class Parallel(NumericalError):
    pass


class BehindOrigin(NumericalError):
    pass


# calibration / camera
class InsufficientViews(ValidationError):
    pass


class DegenerateMotion(NumericalError):
    pass


class Singular(NumericalError):
    pass


class Diverged(NumericalError):
    pass


# simulator
class BehindCamera(NumericalError):
    pass


class OutOfFrame(ValidationError):
    def __init__(self, message, view=None, index=None):
        super().__init__(message)
        self.view = view
        self.index = index


# reconstruction
class EmptyCloud(ValidationError):
    pass


# file formats
class ParseError(ValidationError):
    pass


class MissingField(ValidationError):
    def __init__(self, field):
        super().__init__(f"missing field {field!r}")
        self.field = field


class BadAngles(ValidationError):
    pass


class BadMagic(ValidationError):
    pass


class BadDimensions(ValidationError):
    pass


class Truncated(ValidationError):
    pass


class UnsupportedMaxval(ValidationError):
    pass


class MissingFile(ValidationError):
    def __init__(self, path):
        super().__init__(f"no such file: {path}")
        self.path = path
