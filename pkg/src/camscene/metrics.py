"""Camera-controllability metrics between ground-truth and estimated trajectories.

All metrics consume canonical camera-to-world pairs and sum per-frame errors
over the clip. Translation metrics normalize by scene scale: each clip's own
scale in relative mode, the ground-truth scale for both in metric mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateSceneScaleError, NoObservationsError, ValidationError
from .geometry import Trajectory

logger = logging.getLogger(__name__)

RELATIVE = "relative"
METRIC = "metric"


@dataclass(frozen=True)
class TrajectoryPair:
    """Ground-truth and generated trajectories, canonical c2w, equal length >= 2."""

    gt: Trajectory
    gen: Trajectory

    def __post_init__(self):
        for name, traj in (("gt", self.gt), ("gen", self.gen)):
            if traj.convention != "camera_to_world":
                raise ValidationError(f"{name} trajectory must be camera_to_world")
            if not traj.canonical:
                raise ValidationError(f"{name} trajectory must be canonical")
        if len(self.gt) != len(self.gen):
            raise ValidationError(
                f"frame counts differ: gt {len(self.gt)} vs gen {len(self.gen)}"
            )
        if len(self.gt) < 2:
            raise ValidationError("pairs need at least 2 frames")

    @property
    def n_frames(self) -> int:
        return len(self.gt)


@dataclass(frozen=True)
class MetricReport:
    rot_err: float
    trans_err_relative: float
    trans_err_metric: float
    cam_mc_relative: float
    cam_mc_metric: float
    n_frames: float
    scene_scale_gt: float
    scene_scale_gen: float

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"report field {name} must be finite and >= 0, got {v}")


def scene_scale(traj: Trajectory) -> float:
    """Distance from the first camera to the farthest one (canonical c2w input)."""
    if traj.convention != "camera_to_world" or not traj.canonical:
        raise ValidationError("scene_scale expects a canonical camera_to_world trajectory")
    if len(traj) < 2:
        raise ValidationError("scene_scale needs at least 2 frames")
    norms = [float(np.linalg.norm(p.translation)) for p in traj.poses]
    s = max(norms)
    if s <= 0.0:
        raise DegenerateSceneScaleError("input")
    return s


def _scales(pair: TrajectoryPair, mode: str):
    try:
        s_gt = scene_scale(pair.gt)
    except DegenerateSceneScaleError:
        raise DegenerateSceneScaleError("ground-truth")
    if mode == METRIC:
        return s_gt, s_gt
    try:
        s_gen = scene_scale(pair.gen)
    except DegenerateSceneScaleError:
        raise DegenerateSceneScaleError("generated")
    return s_gt, s_gen


def rot_err(pair: TrajectoryPair) -> float:
    """Summed geodesic angle between rotation pairs, in radians.

    Bit-identical rotations contribute exactly zero; arccos near 1 would
    otherwise turn the ~1e-16 trace roundoff into ~1e-8 of spurious angle.
    """
    total = 0.0
    for g, e in zip(pair.gt.poses, pair.gen.poses):
        if np.array_equal(e.rotation, g.rotation):
            continue
        tr = float(np.trace(e.rotation @ g.rotation.T))
        # traces drift past the legal range by ~1e-8 in floating point
        c = min(1.0, max(-1.0, (tr - 1.0) / 2.0))
        total += float(np.arccos(c))
    return total


def trans_err(pair: TrajectoryPair, mode: str = RELATIVE) -> float:
    """Summed L2 distance of scene-scale-normalized translations."""
    if mode not in (RELATIVE, METRIC):
        raise ValidationError(f"unknown mode {mode!r}")
    s_gt, s_gen = _scales(pair, mode)
    total = 0.0
    for g, e in zip(pair.gt.poses, pair.gen.poses):
        total += float(np.linalg.norm(e.translation / s_gen - g.translation / s_gt))
    return total


def cam_mc(pair: TrajectoryPair, mode: str = RELATIVE) -> float:
    """Summed Frobenius distance of normalized 3x4 camera-to-world matrices."""
    if mode not in (RELATIVE, METRIC):
        raise ValidationError(f"unknown mode {mode!r}")
    s_gt, s_gen = _scales(pair, mode)
    total = 0.0
    for g, e in zip(pair.gt.poses, pair.gen.poses):
        m_gen = np.column_stack([e.rotation, e.translation / s_gen])
        m_gt = np.column_stack([g.rotation, g.translation / s_gt])
        total += float(np.linalg.norm(m_gen - m_gt))
    return total


def compute_report(pair: TrajectoryPair) -> MetricReport:
    """All metrics for one pair in one report."""
    s_gt = scene_scale(pair.gt)
    s_gen = scene_scale(pair.gen)
    return MetricReport(
        rot_err=rot_err(pair),
        trans_err_relative=trans_err(pair, RELATIVE),
        trans_err_metric=trans_err(pair, METRIC),
        cam_mc_relative=cam_mc(pair, RELATIVE),
        cam_mc_metric=cam_mc(pair, METRIC),
        n_frames=float(pair.n_frames),
        scene_scale_gt=s_gt,
        scene_scale_gen=s_gen,
    )


_FIELDS = (
    "rot_err",
    "trans_err_relative",
    "trans_err_metric",
    "cam_mc_relative",
    "cam_mc_metric",
    "n_frames",
    "scene_scale_gt",
    "scene_scale_gen",
)


def aggregate(trial_reports: Mapping[str, Sequence[MetricReport]]) -> MetricReport:
    """Mean over trials per sample, then mean over samples.

    Samples without a single successful trial are excluded with a warning.
    """
    per_sample = []
    excluded = 0
    for sample_id, reports in trial_reports.items():
        reports = list(reports)
        if not reports:
            excluded += 1
            continue
        per_sample.append(
            {f: float(np.mean([getattr(r, f) for r in reports])) for f in _FIELDS}
        )
    if excluded:
        logger.warning("aggregate: excluded %d sample(s) with zero successful trials", excluded)
    if not per_sample:
        raise NoObservationsError("no sample has a successful trial")
    return MetricReport(**{f: float(np.mean([s[f] for s in per_sample])) for f in _FIELDS})
