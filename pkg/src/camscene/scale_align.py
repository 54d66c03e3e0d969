"""Relative-to-metric scale estimation for SfM reconstructions.

Per-point factors are ratios of metric depth (sampled from a depth raster)
to SfM depth (the point's z in the observing camera). A frame's factor is
the median of its point factors; a clip's factor is the median of its frame
factors. Clips whose extreme frame factors land in the outer quantiles of
the dataset are rejected before metric conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import (
    AlignmentFailedError,
    NoObservationsError,
    RejectedAlignmentError,
    ValidationError,
)
from .geometry import CameraIntrinsics, Pose, Trajectory, apply_scale
from .rasters import DepthRaster

FACTOR_EPSILON = 1e-6
DEFAULT_MAX_DEPTH = 20.0  # matches the valid range of the indoor metric depth source


@dataclass(frozen=True)
class SparsePoint:
    """One triangulated SfM point and the pixel observations that saw it.

    track entries are (frame_index, u, v) with u, v in pixels (sub-pixel).
    """

    id: int
    xyz_world: np.ndarray
    track: tuple

    def __post_init__(self):
        xyz = np.asarray(self.xyz_world, dtype=np.float64).reshape(-1)
        if xyz.shape != (3,):
            raise ValidationError(f"xyz_world must be a 3-vector, got {xyz.shape}")
        track = tuple((int(f), float(u), float(v)) for f, u, v in self.track)
        if not track:
            raise ValidationError(f"sparse point {self.id} has an empty track")
        object.__setattr__(self, "xyz_world", xyz)
        object.__setattr__(self, "track", track)


@dataclass(frozen=True)
class ScaleAlignment:
    """Scale summary for one clip: per-frame factors, medians, and the clip factor."""

    clip_id: str
    per_frame_factors: dict
    frame_medians: dict
    clip_alpha: float
    max_frame_factor: float
    min_frame_factor: float
    accepted: bool = True
    rejection_reason: str | None = None

    def __post_init__(self):
        if not self.frame_medians:
            raise ValidationError("alignment must cover at least one frame")
        for f, med in self.frame_medians.items():
            factors = self.per_frame_factors.get(f)
            if not factors:
                raise ValidationError(f"frame {f} has a median but no factors")
            if not math.isclose(med, frame_factor(factors), rel_tol=0, abs_tol=1e-12):
                raise ValidationError(f"frame {f} median does not match its factors")
        if not (self.min_frame_factor <= self.clip_alpha <= self.max_frame_factor):
            raise ValidationError("clip_alpha must lie between the extreme frame factors")


def point_depth_in_frame(p: SparsePoint, pose_w2c: Pose) -> float:
    """Depth (z) of a world point in the given camera; sign preserved for the caller to filter."""
    cam = pose_w2c.rotation @ p.xyz_world + pose_w2c.translation
    return float(cam[2])


def per_point_factor(d_metric: float, d_sfm: float) -> float | None:
    """Ratio of metric to SfM depth, or None when either depth is unusable."""
    if not (np.isfinite(d_metric) and np.isfinite(d_sfm)):
        return None
    if d_metric <= FACTOR_EPSILON or d_sfm <= FACTOR_EPSILON:
        return None
    return d_metric / d_sfm


def frame_factor(factors) -> float:
    """Median of a frame's point factors (mean of the two middle values for even counts)."""
    arr = np.asarray(list(factors), dtype=np.float64)
    if arr.size == 0:
        raise NoObservationsError("frame has no scale factors")
    return float(np.median(arr))


def sample_depth(raster: DepthRaster, u: float, v: float) -> float | None:
    """Sample a depth raster at sub-pixel (u, v).

    Interior samples are bilinear over the four surrounding pixels;
    samples within 1 px of the border fall back to the nearest pixel.
    Returns None when any contributing pixel is invalid.
    """
    h, w = raster.height, raster.width
    values = raster.values
    valid = raster.valid_mask
    if u < 1.0 or u > w - 2 or v < 1.0 or v > h - 2:
        ui = int(np.clip(np.rint(u), 0, w - 1))
        vi = int(np.clip(np.rint(v), 0, h - 1))
        return float(values[vi, ui]) if valid[vi, ui] else None
    u0, v0 = int(np.floor(u)), int(np.floor(v))
    if not valid[v0 : v0 + 2, u0 : u0 + 2].all():
        return None
    fu, fv = u - u0, v - v0
    top = (1 - fu) * values[v0, u0] + fu * values[v0, u0 + 1]
    bot = (1 - fu) * values[v0 + 1, u0] + fu * values[v0 + 1, u0 + 1]
    return float((1 - fv) * top + fv * bot)


def align_clip(
    points,
    depths: Mapping[int, DepthRaster],
    intrinsics: CameraIntrinsics,
    traj_w2c: Trajectory,
    max_depth: float = DEFAULT_MAX_DEPTH,
    clip_id: str = "",
) -> ScaleAlignment:
    """Estimate the relative-to-metric scale factor of one clip.

    Every observation contributes metric_depth / sfm_depth to its frame;
    frames reduce to medians and the clip to the median of frame medians.
    Metric samples beyond max_depth are discarded as out of the predictor's
    trusted range. Frames without valid observations are omitted; a clip
    with no valid frame fails.
    """
    if traj_w2c.convention != "world_to_camera":
        raise ValidationError("align_clip expects world_to_camera poses")
    pose_by_frame = {traj_w2c.frame_index(i): p for i, p in enumerate(traj_w2c.poses)}

    per_frame: dict[int, list] = {}
    for p in points:
        for frame, u, v in p.track:
            pose = pose_by_frame.get(frame)
            raster = depths.get(frame)
            if pose is None or raster is None:
                raise ValidationError(f"observation references frame {frame} with no pose or depth")
            d_sfm = point_depth_in_frame(p, pose)
            d_metric = sample_depth(raster, u, v)
            if d_metric is None or d_metric > max_depth:
                continue
            factor = per_point_factor(d_metric, d_sfm)
            if factor is None:
                continue
            per_frame.setdefault(frame, []).append(factor)

    if not per_frame:
        raise AlignmentFailedError(f"clip {clip_id or '<unnamed>'}: no frame has valid observations")
    medians = {f: frame_factor(factors) for f, factors in sorted(per_frame.items())}
    med_values = np.array(list(medians.values()))
    return ScaleAlignment(
        clip_id=clip_id,
        per_frame_factors={f: tuple(v) for f, v in sorted(per_frame.items())},
        frame_medians=medians,
        clip_alpha=float(np.median(med_values)),
        max_frame_factor=float(med_values.max()),
        min_frame_factor=float(med_values.min()),
    )


def filter_clips(alignments, q: float = 0.02) -> list:
    """Mark outlier clips rejected by two independent quantile passes.

    Each pass ranks clips ascending (first by max frame factor, then by min
    frame factor) and rejects the lowest and highest floor(q*N) clips; a clip
    rejected by either pass is not accepted. Order is preserved.
    """
    alignments = list(alignments)
    if not (0.0 <= q < 0.5):
        raise ValidationError(f"quantile must satisfy 0 <= q < 0.5, got {q}")
    n = len(alignments)
    if n == 0:
        return []
    k = int(math.floor(q * n))
    rejected_by: dict[int, list] = {}

    for key_name in ("max_frame_factor", "min_frame_factor"):
        keys = np.array([getattr(a, key_name) for a in alignments])
        order = np.argsort(keys, kind="stable")
        for idx in order[:k]:
            rejected_by.setdefault(int(idx), []).append(f"low_{key_name}")
        for idx in order[n - k :] if k > 0 else []:
            rejected_by.setdefault(int(idx), []).append(f"high_{key_name}")

    out = []
    for i, a in enumerate(alignments):
        reasons = rejected_by.get(i)
        out.append(
            replace(
                a,
                accepted=reasons is None,
                rejection_reason=None if reasons is None else ",".join(reasons),
            )
        )
    return out


def to_metric(traj: Trajectory, alignment: ScaleAlignment) -> Trajectory:
    """Convert a canonical relative-scale c2w trajectory to metric scale."""
    if not alignment.accepted:
        raise RejectedAlignmentError(
            f"clip {alignment.clip_id or '<unnamed>'} was rejected ({alignment.rejection_reason})"
        )
    return apply_scale(traj, alignment.clip_alpha)
