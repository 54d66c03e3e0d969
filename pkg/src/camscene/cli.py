"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 validation error (bad flags or violated domain
preconditions), 2 I/O error (missing or malformed files). Diagnostics go to
stderr; machine-readable output goes to files only.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .errors import CamsceneError, ParseError, ValidationError
from .geometry import (
    canonicalize,
    interpolate_keyframes,
    invert_trajectory,
    unproject,
)
from .metrics import TrajectoryPair, aggregate, compute_report
from .rasters import DepthRaster
from .renderer import RenderedFrame, ShapingMask, render_preview, shaping_mask
from .scale_align import align_clip, filter_clips, to_metric
from .shaping import (
    LatentVideo,
    NoisePredictor,
    NoiseSchedule,
    PullOracle,
    ShapingConfig,
    TrueEpsOracle,
    default_step_list,
    fresh_eps,
    sample_with_shaping,
    threshold_sweep,
)


class _UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- reconstruct -------------------------------------------------------------


def cmd_reconstruct(args) -> None:
    color = cio.read_color_png(args.image)
    depth = cio.read_depth(args.depth)
    k = cio.read_intrinsics(args.intrinsics)
    cloud = unproject(depth, k, color).as_world()
    cio.write_pointcloud(args.out_cloud, cloud)
    _log(f"reconstructed {len(cloud)} points -> {args.out_cloud}")


# --- align ----------------------------------------------------------------------


def _clip_ids(poses_path: Path) -> list:
    if poses_path.is_dir():
        return sorted(p.stem for p in poses_path.glob("*.txt"))
    return [poses_path.stem]


def _align_one_clip(clip_id, poses_path, colmap_dir, depths_dir, max_depth):
    pose_file = poses_path / f"{clip_id}.txt" if poses_path.is_dir() else poses_path
    record = cio.parse_pose_file(pose_file.read_text(), clip_id=clip_id)
    cdir = colmap_dir if (colmap_dir / "points3D.txt").exists() else colmap_dir / clip_id
    ddir = depths_dir if depths_dir.is_dir() and not (depths_dir / clip_id).is_dir() else depths_dir / clip_id
    sparse, images, warnings = cio.parse_colmap_reconstruction(
        (cdir / "points3D.txt").read_text(), (cdir / "images.txt").read_text()
    )
    for w in warnings:
        _log(f"{clip_id}: {w}")

    ts_to_pos = {f.timestamp: i for i, f in enumerate(record.frames)}
    image_to_pos = {}
    depths = {}
    for image_id, img in images.items():
        stem = Path(img.name).stem
        try:
            ts = int(stem)
        except ValueError:
            raise ParseError(f"{clip_id}: image name {img.name!r} is not a timestamp")
        if ts not in ts_to_pos:
            raise ParseError(f"{clip_id}: image timestamp {ts} missing from pose file")
        pos = ts_to_pos[ts]
        image_to_pos[image_id] = pos
        for ext in (".pfm", ".png"):
            path = ddir / f"{stem}{ext}"
            if path.exists():
                depths[pos] = cio.read_depth(path)
                break
        else:
            raise ParseError(f"{clip_id}: no depth raster for frame {stem}")

    first = next(iter(depths.values()))
    k = cio.clip_intrinsics(record, width=first.width, height=first.height)
    traj_w2c = cio.clip_trajectory(record)

    from dataclasses import replace as dc_replace

    points = [
        dc_replace(p, track=tuple((image_to_pos[i], u, v) for i, u, v in p.track if i in image_to_pos))
        for p in sparse
    ]
    points = [p for p in points if p.track]
    alignment = align_clip(points, depths, k, traj_w2c, max_depth=max_depth, clip_id=clip_id)
    c2w = canonicalize(invert_trajectory(traj_w2c))
    return alignment, c2w


def cmd_align(args) -> None:
    poses_path = Path(args.poses)
    colmap_dir = Path(args.colmap_dir)
    depths_dir = Path(args.depths_dir)
    clip_ids = _clip_ids(poses_path)
    if not clip_ids:
        raise ValidationError(f"no pose files found under {poses_path}")
    alignments, trajectories = [], {}
    for clip_id in clip_ids:
        alignment, c2w = _align_one_clip(clip_id, poses_path, colmap_dir, depths_dir, args.max_depth)
        alignments.append(alignment)
        trajectories[clip_id] = c2w
        _log(f"{clip_id}: alpha={alignment.clip_alpha:.6g}")
    alignments = filter_clips(alignments, q=args.quantile)
    cio.write_alignment_report(args.out_report, alignments)
    _log(f"wrote alignment report -> {args.out_report}")
    if args.out_poses:
        out_dir = Path(args.out_poses)
        out_dir.mkdir(parents=True, exist_ok=True)
        for a in alignments:
            if not a.accepted:
                _log(f"{a.clip_id}: rejected ({a.rejection_reason}), no metric poses written")
                continue
            metric = to_metric(trajectories[a.clip_id], a)
            cio.write_trajectory(out_dir / f"{a.clip_id}.json", metric)


# --- interp ------------------------------------------------------------------------


def cmd_interp(args) -> None:
    keys = cio.read_trajectory(args.keyframes)
    if keys.convention != "camera_to_world":
        raise ValidationError("keyframes must be camera_to_world")
    traj = interpolate_keyframes(keys.poses, args.frames, scale_space=keys.scale_space)
    cio.write_trajectory(args.out, traj)
    _log(f"interpolated {len(keys)} keyframes -> {args.frames} frames -> {args.out}")


# --- preview --------------------------------------------------------------------------


def cmd_preview(args) -> None:
    cloud = cio.read_pointcloud(args.cloud)
    traj = cio.read_trajectory(args.traj)
    k = cio.read_intrinsics(args.intrinsics)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = render_preview(cloud, traj, k, radius_px=args.radius)
    for i, frame in enumerate(frames):
        cio.write_color_png(out_dir / f"color_{i:03d}.png", frame.color)
        mask = shaping_mask(frame, args.kernel)
        cio.write_pbm(out_dir / f"mask_{i:03d}.pbm", mask.mask)
        if args.save_depth:
            depth = np.where(frame.visibility, frame.depth_buffer, 0.0)
            cio.write_pfm(out_dir / f"depth_{i:03d}.pfm", DepthRaster(depth))
    _log(f"rendered {len(frames)} preview frames -> {out_dir}")


# --- shape / sweep ---------------------------------------------------------------------


def _load_shaping_inputs(preview_dir, masks_dir, kernel):
    preview_paths = sorted(Path(preview_dir).glob("color_*.png"))
    mask_paths = sorted(Path(masks_dir).glob("mask_*.pbm"))
    if not preview_paths:
        raise ValidationError(f"no color_*.png files under {preview_dir}")
    if len(preview_paths) != len(mask_paths):
        raise ValidationError(
            f"{len(preview_paths)} preview frames but {len(mask_paths)} masks"
        )
    frames, masks, raw_colors = [], [], []
    for cp, mp in zip(preview_paths, mask_paths):
        color = cio.read_color_png(cp)
        mask = cio.read_pbm(mp)
        if mask.shape != color.shape[:2]:
            raise ValidationError(f"mask {mp.name} does not match frame {cp.name}")
        raw_colors.append(color)
        vis = mask
        depth = np.where(vis, 1.0, np.inf)
        frames.append(RenderedFrame(np.where(vis[..., None], color, 0.0), depth, vis))
        masks.append(ShapingMask(mask, kernel))
    return tuple(frames), tuple(masks), np.stack(raw_colors)


def _make_schedule(name: str) -> NoiseSchedule:
    if name == "linear_beta":
        return NoiseSchedule.linear_beta()
    if name == "linear_alpha_bar":
        return NoiseSchedule.linear_alpha_bar()
    raise ValidationError(f"unknown schedule {name!r}")


def _make_denoiser(name, schedule, raw_colors, args):
    clean = LatentVideo(raw_colors)
    if name == "oracle":
        return TrueEpsOracle(clean, schedule)
    if name == "pull":
        target = clean
        if args.pull_target:
            target = LatentVideo(
                np.stack(
                    [cio.read_color_png(p) for p in sorted(Path(args.pull_target).glob("*.png"))]
                )
            )
        return PullOracle(target, schedule, strength=args.pull_strength)
    if name == "noise":
        return NoisePredictor(schedule)
    raise ValidationError(f"unknown denoiser {name!r}")


def _initial_noise(seed: int, shape) -> LatentVideo:
    # keyed off-step so it never collides with per-step shaping noise
    return fresh_eps(seed, 0, shape)


def cmd_shape(args) -> None:
    frames, masks, raw = _load_shaping_inputs(args.preview_dir, args.masks_dir, args.kernel)
    schedule = _make_schedule(args.schedule)
    cfg = ShapingConfig(preview=frames, masks=masks, t_ns=args.tns, kernel=args.kernel, rng_seed=args.seed)
    denoiser = _make_denoiser(args.denoiser, schedule, raw, args)
    steps = default_step_list(schedule, args.steps)
    init = _initial_noise(args.seed, raw.shape)
    result = sample_with_shaping(denoiser, cfg, schedule, steps, init)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(result.shape[0]):
        cio.write_color_png(out_dir / f"shaped_{i:03d}.png", np.clip(result.values[i], 0.0, 1.0))
    _log(f"sampled {result.shape[0]} frames (t_ns={args.tns}, seed={args.seed}) -> {out_dir}")


def cmd_sweep(args) -> None:
    frames, masks, raw = _load_shaping_inputs(args.preview_dir, args.masks_dir, args.kernel)
    schedule = _make_schedule(args.schedule)
    cfg = ShapingConfig(preview=frames, masks=masks, kernel=args.kernel, rng_seed=args.seed)
    denoiser = _make_denoiser(args.denoiser, schedule, raw, args)
    steps = default_step_list(schedule, args.steps)
    thresholds = [int(t) for t in args.tns.split(",")]
    init = _initial_noise(args.seed, raw.shape)
    records = threshold_sweep(denoiser, cfg, schedule, thresholds, steps, init)
    cio.write_sweep_csv(args.out, records)
    _log(f"swept {len(records)} thresholds -> {args.out}")


# --- eval ---------------------------------------------------------------------------------------


def _load_canonical_c2w(path):
    traj = cio.read_trajectory(path)
    if traj.convention == "world_to_camera":
        traj = invert_trajectory(traj)
    return canonicalize(traj)


def cmd_eval(args) -> None:
    if args.mode not in ("relative", "metric", "both"):
        raise ValidationError(f"unknown mode {args.mode!r}")
    if args.trials_dir:
        trials = {}
        root = Path(args.trials_dir)
        sample_dirs = sorted(d for d in root.iterdir() if d.is_dir())
        if not sample_dirs:
            raise ValidationError(f"no sample directories under {root}")
        per_sample = {}
        for d in sample_dirs:
            gt = _load_canonical_c2w(d / "gt.json")
            reports = []
            for gen_path in sorted(d.glob("gen_*.json")):
                gen = _load_canonical_c2w(gen_path)
                reports.append(compute_report(TrajectoryPair(gt=gt, gen=gen)))
            trials[d.name] = reports
            if reports:
                per_sample[d.name] = aggregate({d.name: reports})
        result = aggregate(trials)
        cio.write_metric_report(args.out, result)
        if args.out_csv:
            cio.write_metric_csv(args.out_csv, per_sample)
        _log(f"aggregated {len(per_sample)} samples -> {args.out}")
    else:
        if not (args.gt and args.gen):
            raise ValidationError("eval needs either --gt and --gen, or --trials-dir")
        pair = TrajectoryPair(gt=_load_canonical_c2w(args.gt), gen=_load_canonical_c2w(args.gen))
        report = compute_report(pair)
        cio.write_metric_report(args.out, report)
        _log(f"evaluated {pair.n_frames} frames -> {args.out}")


# --- serve --------------------------------------------------------------------------------------


def cmd_serve(args) -> None:
    import os

    import uvicorn

    from .service import create_app

    data_dir = args.data_dir or os.environ.get("CAMSCENE_DATA_DIR")
    if not data_dir:
        raise ValidationError("pass --data-dir or set CAMSCENE_DATA_DIR")
    app = create_app(Path(data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


# --- parser -------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="camscene", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="unproject an image + depth raster into a point cloud")
    r.add_argument("--image", required=True)
    r.add_argument("--depth", required=True)
    r.add_argument("--intrinsics", required=True)
    r.add_argument("--out-cloud", required=True)
    r.set_defaults(func=cmd_reconstruct)

    a = sub.add_parser("align", help="estimate metric scale for clips and filter outliers")
    a.add_argument("--colmap-dir", required=True)
    a.add_argument("--depths-dir", required=True)
    a.add_argument("--poses", required=True, help="pose file or directory of pose files")
    a.add_argument("--out-report", required=True)
    a.add_argument("--out-poses", help="directory for metric-scale trajectory JSON files")
    a.add_argument("--quantile", type=float, default=0.02)
    a.add_argument("--max-depth", type=float, default=20.0)
    a.set_defaults(func=cmd_align)

    i = sub.add_parser("interp", help="interpolate keyframes into a dense trajectory")
    i.add_argument("--keyframes", required=True)
    i.add_argument("--frames", type=int, default=16)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interp)

    v = sub.add_parser("preview", help="render preview frames and shaping masks along a trajectory")
    v.add_argument("--cloud", required=True)
    v.add_argument("--traj", required=True)
    v.add_argument("--intrinsics", required=True)
    v.add_argument("--out-dir", required=True)
    v.add_argument("--radius", type=int, default=1)
    v.add_argument("--kernel", type=int, default=3)
    v.add_argument("--save-depth", action="store_true")
    v.set_defaults(func=cmd_preview)

    s = sub.add_parser("shape", help="run scene-constrained noise shaping over preview frames")
    s.add_argument("--preview-dir", required=True)
    s.add_argument("--masks-dir", required=True)
    s.add_argument("--tns", type=int, default=900)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--denoiser", choices=("oracle", "pull", "noise"), default="pull")
    s.add_argument("--kernel", type=int, default=3)
    s.add_argument("--schedule", choices=("linear_beta", "linear_alpha_bar"), default="linear_beta")
    s.add_argument("--pull-strength", type=float, default=0.4)
    s.add_argument("--pull-target", help="directory of PNG frames the pull denoiser drifts toward")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_shape)

    w = sub.add_parser("sweep", help="threshold sweep; emits a CSV of masked RMSE per t_ns")
    w.add_argument("--preview-dir", required=True)
    w.add_argument("--masks-dir", required=True)
    w.add_argument("--tns", default="600,800,900,1000", help="comma-separated thresholds")
    w.add_argument("--steps", type=int, default=50)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--denoiser", choices=("oracle", "pull", "noise"), default="pull")
    w.add_argument("--kernel", type=int, default=3)
    w.add_argument("--schedule", choices=("linear_beta", "linear_alpha_bar"), default="linear_alpha_bar")
    w.add_argument("--pull-strength", type=float, default=0.4)
    w.add_argument("--pull-target")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="camera controllability metrics between two trajectories")
    e.add_argument("--gt")
    e.add_argument("--gen")
    e.add_argument("--mode", default="both")
    e.add_argument("--trials-dir", help="directory of {sample}/gt.json + gen_*.json trees")
    e.add_argument("--out", required=True)
    e.add_argument("--out-csv")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("serve", help="run the HTTP service for interactive trajectory design")
    d.add_argument("--port", type=int, default=8000)
    d.add_argument("--host", default="127.0.0.1")
    d.add_argument("--data-dir", help="session store root (or set CAMSCENE_DATA_DIR)")
    d.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except _UsageError as e:
        _log(f"usage error: {e}")
        return 1
    except (ParseError, OSError) as e:
        _log(f"i/o error: {e}")
        return 2
    except CamsceneError as e:
        _log(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
