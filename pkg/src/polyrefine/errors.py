"""Exception types shared across the package."""


class PolyrefineError(Exception):
    """Base class for all package errors."""


class MalformedInputError(PolyrefineError):
    """Input does not satisfy the documented preconditions."""


class DegenerateElementError(PolyrefineError):
    """Element has (near-)zero volume or is otherwise degenerate."""


class OrientationError(PolyrefineError):
    """Face loops are not consistently outward-oriented."""


class DegenerateHullError(PolyrefineError):
    """Hull input is coplanar/collinear."""


class NoCutError(PolyrefineError):
    """Cutting plane does not pass through the element interior."""


class CutFailedError(PolyrefineError):
    """Slicing produced pieces that cannot be assembled into closed surfaces."""


class ResolutionError(PolyrefineError):
    """Sampling grid too coarse for the element."""


class ReseedError(PolyrefineError):
    """Seed points are too close together."""


class RefinementRejectedError(PolyrefineError):
    """Replacement children do not conserve the parent volume."""


class ElementUnrefinableError(PolyrefineError):
    """No valid cut was found for the element, emergency attempts included."""


class DegenerateReferenceError(PolyrefineError):
    """Reference-shape vertices are coplanar; no usable hull."""


class FormatError(PolyrefineError):
    """A serialized file has the wrong magic, version, or length."""
