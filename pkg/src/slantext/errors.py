"""Exception types shared across the package."""


class SlantextError(Exception):
    """Base class for all package errors."""


class ShapeError(SlantextError):
    """Array dimensions or channel counts do not match what an op requires."""


class GeometryError(SlantextError):
    """A polygon, quad or curve violates its invariants."""


class LayoutError(SlantextError):
    """Flat segments cannot be packed into the requested canvas."""


class CharsetError(SlantextError):
    """Text contains a character outside the supported set."""


class ScheduleError(SlantextError):
    """A noise schedule is ill-formed or a step is numerically invalid."""


class ConditionError(SlantextError):
    """A scene condition matches no corpus exemplar."""


class InputError(SlantextError):
    """Malformed user input (config files, masks, manifests)."""
