"""Raster and point-cloud value types shared by geometry, the renderer and I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DepthRaster:
    """Per-pixel depth in meters, row-major with top-left origin.

    A pixel is valid iff its value is finite and > 0; anything else marks a hole.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError(f"depth raster must be HxW with dims >= 1, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0.0)


@dataclass(frozen=True)
class PointCloud:
    """Colored 3D points, tagged with the frame they are expressed in.

    source_pixel keeps the linear pixel index (v * width + u) a point was
    unprojected from, when it came from a raster.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    source_pixel: np.ndarray | None = None
    frame_tag: str = "camera"

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValidationError(f"positions must be Nx3, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("positions contain non-finite values")
        object.__setattr__(self, "positions", _frozen(p))
        if self.colors is not None:
            c = np.asarray(self.colors, dtype=np.float64)
            if c.shape != (p.shape[0], 3):
                raise ValidationError(f"colors must be Nx3 matching positions, got {c.shape}")
            if c.size and (c.min() < 0.0 or c.max() > 1.0):
                raise ValidationError("colors must lie in [0, 1]")
            object.__setattr__(self, "colors", _frozen(c))
        if self.source_pixel is not None:
            s = np.asarray(self.source_pixel, dtype=np.int64)
            if s.shape != (p.shape[0],):
                raise ValidationError("source_pixel must be length-N")
            object.__setattr__(self, "source_pixel", _frozen(s))
        if self.frame_tag not in ("camera", "world"):
            raise ValidationError(f"frame_tag must be 'camera' or 'world', got {self.frame_tag!r}")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def as_world(self) -> "PointCloud":
        """Re-tag a camera-frame cloud as world-frame.

        Used when the source camera defines the world frame (canonical
        trajectories put the first camera at the world origin).
        """
        return PointCloud(self.positions, self.colors, self.source_pixel, "world")
