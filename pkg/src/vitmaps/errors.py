"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class StateError(RuntimeError):
    """Operation called out of order (e.g. backward before forward)."""


class WeightFormatError(ValueError):
    """Weight file is malformed or does not match the model config."""


class ImageFormatError(ValueError):
    """Image file cannot be decoded as 8-bit RGB."""
