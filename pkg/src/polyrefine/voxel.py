"""Binary-image conversion of polyhedra.

An element is mapped into the image cube by translating its bounding
box center onto the image center and scaling uniformly so the longest
box extent spans 14/16 of the image; the aspect ratio is preserved and
a one-voxel border stays empty so pooling never clips boundary
features. A voxel is set when its center lies inside the element, so
the image depends on the shape only up to scaling and translation.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DegenerateElementError, MalformedInputError

RESOLUTION = 16
FILL_FRACTION = 14.0 / 16.0

_centers_1d = (np.arange(RESOLUTION) + 0.5) / RESOLUTION
_CENTERS = np.stack(
    np.meshgrid(_centers_1d, _centers_1d, _centers_1d, indexing="ij"),
    axis=-1).reshape(-1, 3)


@dataclass
class BinaryImage:
    voxels: np.ndarray          # (16, 16, 16) uint8, indexed [ix, iy, iz]
    source_id: object = None

    def __post_init__(self):
        self.voxels = np.ascontiguousarray(self.voxels, dtype=np.uint8)
        if self.voxels.shape != (RESOLUTION,) * 3:
            raise MalformedInputError(
                f"image must be {RESOLUTION}^3, got {self.voxels.shape}")
        if not self.voxels.any():
            raise DegenerateElementError("image has no occupied voxels")

    def occupancy(self) -> int:
        return int(self.voxels.sum())

    def to_bytes(self) -> bytes:
        """Flat 0/1 stream, z-major, then y, then x."""
        return np.transpose(self.voxels, (2, 1, 0)).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, source_id=None) -> "BinaryImage":
        if len(raw) != RESOLUTION ** 3:
            raise MalformedInputError(
                f"expected {RESOLUTION ** 3} bytes, got {len(raw)}")
        zyx = np.frombuffer(raw, dtype=np.uint8).reshape((RESOLUTION,) * 3)
        return cls(np.transpose(zyx, (2, 1, 0)), source_id=source_id)


def voxelize(p: geometry.Polyhedron) -> BinaryImage:
    """16^3 occupancy image of a polyhedron."""
    lo, hi = geometry.bounding_box(p)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateElementError("element has no spatial extent")
    center = (lo + hi) / 2.0
    scale = extent / FILL_FRACTION
    # Map voxel centers into element coordinates instead of moving the
    # element, so membership tolerances track the element's own scale.
    pts = (_CENTERS - 0.5) * scale + center
    mask = geometry.contains_points(p, pts)
    voxels = mask.reshape((RESOLUTION,) * 3).astype(np.uint8)
    return BinaryImage(voxels, source_id=p.id)
