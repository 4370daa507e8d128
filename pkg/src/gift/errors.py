"""Exception hierarchy shared by every gift module."""


class GiftError(Exception):
    """Base class for all errors raised by this package."""


class ClipSyntaxError(GiftError):
    """Clip document is not well-formed JSON."""


class SchemaError(GiftError):
    """Clip document has a missing field, wrong arity or wrong type."""


class InvariantError(GiftError):
    """Clip is well-formed but breaks a semantic invariant."""


class ConfigError(GiftError):
    pass


class MissingVelocity(GiftError):
    """Features requested before velocities were derived."""


class RangeError(GiftError):
    pass


class ShapeError(GiftError):
    pass


class EmptyInput(GiftError):
    pass


class KeyMismatch(GiftError):
    """Prediction and ground-truth clip sets differ."""


class NonFinite(GiftError):
    """A NaN or Inf appeared in a forward pass or loss."""
