"""camscene: metric-scale camera trajectory toolkit.

Depth unprojection and splat preview rendering of a reconstructed scene,
SfM relative-to-metric scale alignment, scene-constrained noise shaping in
a pluggable deterministic sampler, SE(3) keyframe interpolation, and camera
controllability metrics, plus a CLI and an HTTP service for interactive
trajectory design.
"""

from .errors import CamsceneError, ParseError, ValidationError
from .geometry import (
    C2W,
    METRIC,
    RELATIVE,
    W2C,
    CameraIntrinsics,
    Pose,
    Trajectory,
    apply_scale,
    canonicalize,
    interpolate_keyframes,
    invert_pose,
    invert_trajectory,
    unproject,
)
from .metrics import MetricReport, TrajectoryPair, aggregate, cam_mc, compute_report, rot_err, scene_scale, trans_err
from .rasters import DepthRaster, PointCloud
from .renderer import RenderedFrame, ShapingMask, project_point, render_preview, shaping_mask, splat
from .scale_align import (
    ScaleAlignment,
    SparsePoint,
    align_clip,
    filter_clips,
    frame_factor,
    per_point_factor,
    point_depth_in_frame,
    to_metric,
)
from .shaping import (
    ConditionMode,
    LatentVideo,
    NoiseSchedule,
    NoisePredictor,
    PullOracle,
    ShapingConfig,
    TrueEpsOracle,
    add_noise,
    condition_mask,
    default_step_list,
    preview_to_latent,
    sample_with_shaping,
    sampler_step,
    shape_latent,
    threshold_sweep,
)

__version__ = "0.1.0"
