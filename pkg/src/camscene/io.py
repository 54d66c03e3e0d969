"""Parsers and writers for every external format the toolkit touches.

Formats (all round-trip bit-exactly on valid data):

* pose files  -- one clip per file: line 1 is a source URL, every following
  line has 19 fields: integer microsecond timestamp, fx fy cx cy 0 0 in
  normalized units, then a row-major 3x4 world-to-camera matrix.
* COLMAP text exports -- points3D.txt / images.txt as produced by the text
  exporter ('#' comments; images use two lines per image).
* PFM depth rasters -- "Pf" single channel; a negative scale marks
  little-endian; rows are stored bottom-to-top on disk and normalized to a
  top-left origin in memory (a classic bug source, handled here once).
* 16-bit PNG depth in millimeters (value / 1000 -> meters), read-only.
* 8-bit PNG for color frames, P4 PBM for masks (1 bit = selected).
* JSON for trajectories, alignment reports and metric reports; binary
  little-endian PLY for point clouds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, RasterFormatError, ValidationError
from .geometry import C2W, W2C, CameraIntrinsics, Pose, Trajectory
from .metrics import MetricReport
from .rasters import DepthRaster, PointCloud
from .scale_align import ScaleAlignment, SparsePoint

# --- pose files (one clip per file) -----------------------------------------

POSE_LINE_FIELDS = 19


@dataclass(frozen=True)
class ClipFrame:
    timestamp: int
    intrinsics_normalized: tuple  # fx fy cx cy 0 0
    w2c: np.ndarray  # 3x4


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    frames: tuple
    source_url: str | None = None


def parse_pose_file(text: str, clip_id: str = "") -> ClipRecord:
    """Parse a clip pose file; raises ParseError with the offending line number."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("pose file is empty", line=1)
    url = lines[0].strip()
    frames = []
    prev_ts = None
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.split()
        if len(fields) != POSE_LINE_FIELDS:
            raise ParseError(
                f"expected {POSE_LINE_FIELDS} fields, found {len(fields)}", line=lineno
            )
        try:
            ts = int(fields[0])
            values = [float(x) for x in fields[1:]]
        except ValueError as e:
            raise ParseError(f"unparseable number: {e}", line=lineno) from None
        if prev_ts is not None and ts <= prev_ts:
            raise ParseError(
                f"timestamps must be strictly increasing ({ts} after {prev_ts})", line=lineno
            )
        prev_ts = ts
        frames.append(
            ClipFrame(
                timestamp=ts,
                intrinsics_normalized=tuple(values[:6]),
                w2c=np.array(values[6:]).reshape(3, 4),
            )
        )
    return ClipRecord(clip_id=clip_id, frames=tuple(frames), source_url=url)


def write_pose_file(record: ClipRecord) -> str:
    lines = [record.source_url or ""]
    for f in record.frames:
        nums = [repr(float(x)) for x in f.intrinsics_normalized]
        nums += [repr(float(x)) for x in np.asarray(f.w2c).reshape(-1)]
        lines.append(" ".join([str(int(f.timestamp))] + nums))
    return "\n".join(lines) + "\n"


def clip_intrinsics(record: ClipRecord, width: int, height: int) -> CameraIntrinsics:
    """Pixel-unit intrinsics of a clip (first frame; shared across frames)."""
    if not record.frames:
        raise ValidationError(f"clip {record.clip_id} has no frames")
    fx, fy, cx, cy = record.frames[0].intrinsics_normalized[:4]
    return CameraIntrinsics.from_normalized(fx, fy, cx, cy, width, height)


def clip_trajectory(record: ClipRecord) -> Trajectory:
    """World-to-camera trajectory of a clip, indexed by frame position."""
    if not record.frames:
        raise ValidationError(f"clip {record.clip_id} has no frames")
    poses = tuple(Pose(f.w2c[:, :3], f.w2c[:, 3]) for f in record.frames)
    return Trajectory(poses, convention=W2C, frame_indices=tuple(range(len(poses))))


# --- COLMAP text exports ------------------------------------------------------


@dataclass(frozen=True)
class ColmapPoint:
    id: int
    xyz: np.ndarray
    rgb: tuple
    error: float
    track: tuple  # (image_id, point2d_idx) pairs


@dataclass(frozen=True)
class ColmapImage:
    id: int
    pose_w2c: Pose
    name: str
    observations: tuple  # (x, y, point3d_id) triples


def _quat_to_rotation(qw, qx, qy, qz, lineno):
    norm = np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    if abs(norm - 1.0) > 1e-3:
        raise ParseError(f"quaternion norm {norm:.6f} deviates from 1 beyond 1e-3", line=lineno)
    w, x, y, z = qw / norm, qx / norm, qy / norm, qz / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def parse_colmap_points(text: str) -> list:
    """points3D.txt: POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*"""
    points = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 8 or (len(fields) - 8) % 2 != 0:
            raise ParseError(f"malformed points3D row ({len(fields)} fields)", line=lineno)
        try:
            pid = int(fields[0])
            xyz = np.array([float(x) for x in fields[1:4]])
            rgb = tuple(int(x) for x in fields[4:7])
            error = float(fields[7])
            rest = [int(x) for x in fields[8:]]
        except ValueError as e:
            raise ParseError(f"unparseable number: {e}", line=lineno) from None
        track = tuple(zip(rest[0::2], rest[1::2]))
        points.append(ColmapPoint(id=pid, xyz=xyz, rgb=rgb, error=error, track=track))
    return points


def parse_colmap_images(text: str) -> dict:
    """images.txt: two lines per image (pose line, then x y point3d_id triples)."""
    images: dict[int, ColmapImage] = {}
    pending = None  # (lineno, fields) of a pose line awaiting its 2D-point line
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if pending is None:
            fields = line.split()
            if len(fields) < 10:
                raise ParseError(f"malformed image pose row ({len(fields)} fields)", line=lineno)
            pending = (lineno, fields)
            continue
        pose_lineno, fields = pending
        pending = None
        try:
            image_id = int(fields[0])
            qw, qx, qy, qz = (float(x) for x in fields[1:5])
            tx, ty, tz = (float(x) for x in fields[5:8])
            name = " ".join(fields[9:])
        except ValueError as e:
            raise ParseError(f"unparseable number: {e}", line=pose_lineno) from None
        rot = _quat_to_rotation(qw, qx, qy, qz, pose_lineno)
        obs_fields = line.split()
        if len(obs_fields) % 3 != 0:
            raise ParseError("2D-point line length is not a multiple of 3", line=lineno)
        try:
            obs = tuple(
                (float(obs_fields[i]), float(obs_fields[i + 1]), int(obs_fields[i + 2]))
                for i in range(0, len(obs_fields), 3)
            )
        except ValueError as e:
            raise ParseError(f"unparseable number: {e}", line=lineno) from None
        images[image_id] = ColmapImage(
            id=image_id,
            pose_w2c=Pose(rot, np.array([tx, ty, tz])),
            name=name,
            observations=obs,
        )
    if pending is not None:
        raise ParseError("image pose row without its 2D-point line", line=pending[0])
    return images


def join_colmap_observations(points, images: dict, warnings: list | None = None) -> list:
    """Build SparsePoints whose tracks carry (image_id, u, v) pixel observations.

    Observations with point3d_id == -1 never appear; track pairs referencing
    missing images or mismatched 2D points are dropped with a warning entry.
    """
    out = []
    for p in points:
        track = []
        for image_id, p2d_idx in p.track:
            img = images.get(image_id)
            if img is None or not (0 <= p2d_idx < len(img.observations)):
                if warnings is not None:
                    warnings.append(f"point {p.id}: dangling reference to image {image_id}")
                continue
            x, y, point3d_id = img.observations[p2d_idx]
            if point3d_id != p.id:
                if warnings is not None:
                    warnings.append(
                        f"point {p.id}: image {image_id} 2D point {p2d_idx} references {point3d_id}"
                    )
                continue
            track.append((image_id, x, y))
        if track:
            out.append(SparsePoint(id=p.id, xyz_world=p.xyz, track=tuple(track)))
        elif warnings is not None:
            warnings.append(f"point {p.id}: no usable observations")
    return out


def parse_colmap_reconstruction(points_text: str, images_text: str):
    """Convenience: parse both files and join; returns (sparse_points, images, warnings)."""
    warnings: list[str] = []
    points = parse_colmap_points(points_text)
    images = parse_colmap_images(images_text)
    sparse = join_colmap_observations(points, images, warnings)
    return sparse, images, warnings


# --- PFM ----------------------------------------------------------------------


def decode_pfm(data: bytes) -> DepthRaster:
    """Decode a single-channel PFM; disk rows are bottom-to-top."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated PFM header", offset=start)
        return data[start:pos], start

    magic, off = token()
    if magic == b"PF":
        raise RasterFormatError("color PFM not supported for depth rasters", offset=off)
    if magic != b"Pf":
        raise RasterFormatError(f"bad PFM magic {magic!r}", offset=off)
    try:
        w = int(token()[0])
        h = int(token()[0])
        scale_tok, scale_off = token()
        scale = float(scale_tok)
    except ValueError:
        raise RasterFormatError("malformed PFM header number", offset=pos) from None
    if w < 1 or h < 1:
        raise RasterFormatError(f"bad PFM dimensions {w}x{h}", offset=pos)
    if scale == 0.0:
        raise RasterFormatError("PFM scale must be non-zero", offset=scale_off)
    pos += 1  # single whitespace byte terminates the header
    expected = w * h * 4
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise RasterFormatError(
            f"PFM data truncated: expected {expected} bytes, found {len(raster)}", offset=pos
        )
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(raster, dtype=dtype).reshape(h, w)
    return DepthRaster(values[::-1].astype(np.float64))


def encode_pfm(raster: DepthRaster) -> bytes:
    """Encode little-endian single-channel PFM; rejects non-finite values."""
    values = raster.values
    if not np.all(np.isfinite(values)):
        raise ValidationError("refusing to write non-finite depth values")
    header = f"Pf\n{raster.width} {raster.height}\n-1.0\n".encode("ascii")
    return header + values[::-1].astype("<f4").tobytes()


def read_pfm(path) -> DepthRaster:
    return decode_pfm(Path(path).read_bytes())


def write_pfm(path, raster: DepthRaster) -> None:
    Path(path).write_bytes(encode_pfm(raster))


# --- PNG ------------------------------------------------------------------------


def read_color_png(path) -> np.ndarray:
    """8-bit RGB PNG to an HxWx3 float array in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except Exception as e:
        raise RasterFormatError(f"cannot decode PNG {path}: {e}") from None
    return rgb / 255.0


def write_color_png(path, color: np.ndarray) -> None:
    color = np.asarray(color, dtype=np.float64)
    if color.ndim != 3 or color.shape[2] != 3:
        raise ValidationError(f"color must be HxWx3, got {color.shape}")
    if not np.all(np.isfinite(color)):
        raise ValidationError("refusing to write non-finite color values")
    quantized = np.rint(np.clip(color, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(Path(path), format="PNG")


def encode_color_png(color: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    quantized = np.rint(np.clip(np.asarray(color), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def read_depth_png_mm(path) -> DepthRaster:
    """16-bit grayscale PNG holding millimeters; returns meters."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("I", "I;16", "I;16B"):
                raise RasterFormatError(f"expected 16-bit depth PNG, got mode {im.mode}")
            mm = np.asarray(im, dtype=np.float64)
    except RasterFormatError:
        raise
    except Exception as e:
        raise RasterFormatError(f"cannot decode depth PNG {path}: {e}") from None
    return DepthRaster(mm / 1000.0)


def read_depth(path) -> DepthRaster:
    """Dispatch on extension: .pfm or 16-bit millimeter .png."""
    p = Path(path)
    if p.suffix.lower() == ".pfm":
        return read_pfm(p)
    if p.suffix.lower() == ".png":
        return read_depth_png_mm(p)
    raise RasterFormatError(f"unsupported depth raster extension {p.suffix!r}")


# --- PBM (P4) --------------------------------------------------------------------


def decode_pbm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P4"):
        raise RasterFormatError("bad PBM magic (P4 expected)", offset=0)
    pos = 2
    dims = []
    while len(dims) < 2:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        try:
            dims.append(int(data[start:pos]))
        except ValueError:
            raise RasterFormatError("malformed PBM dimension", offset=start) from None
    pos += 1  # single whitespace terminates the header
    w, h = dims
    row_bytes = (w + 7) // 8
    expected = row_bytes * h
    raw = data[pos : pos + expected]
    if len(raw) != expected:
        raise RasterFormatError(
            f"PBM data truncated: expected {expected} bytes, found {len(raw)}", offset=pos
        )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(h, row_bytes), axis=1)
    return bits[:, :w].astype(bool)


def encode_pbm(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValidationError(f"mask must be HxW, got shape {mask.shape}")
    h, w = mask.shape
    packed = np.packbits(mask.astype(np.uint8), axis=1)
    return f"P4\n{w} {h}\n".encode("ascii") + packed.tobytes()


def read_pbm(path) -> np.ndarray:
    return decode_pbm(Path(path).read_bytes())


def write_pbm(path, mask: np.ndarray) -> None:
    Path(path).write_bytes(encode_pbm(mask))


# --- trajectory JSON ----------------------------------------------------------------


def trajectory_to_json(traj: Trajectory) -> dict:
    doc = {
        "convention": traj.convention,
        "scale_space": traj.scale_space,
        "poses": [
            {
                "r": [float(x) for x in p.rotation.reshape(-1)],
                "t": [float(x) for x in p.translation],
            }
            for p in traj.poses
        ],
    }
    if traj.frame_indices is not None:
        doc["frame_indices"] = list(traj.frame_indices)
    return doc


def trajectory_from_json(doc: dict) -> Trajectory:
    try:
        convention = doc["convention"]
        scale_space = doc["scale_space"]
        pose_docs = doc["poses"]
    except (KeyError, TypeError) as e:
        raise ParseError(f"trajectory JSON missing field: {e}") from None
    if convention not in (W2C, C2W):
        raise ParseError(f"unknown convention {convention!r}")
    poses = []
    for i, pd in enumerate(pose_docs):
        try:
            r = np.array([float(x) for x in pd["r"]]).reshape(3, 3)
            t = np.array([float(x) for x in pd["t"]])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"pose {i}: {e}") from None
        poses.append(Pose(r, t))
    fi = doc.get("frame_indices")
    return Trajectory(
        tuple(poses),
        convention=convention,
        scale_space=scale_space,
        frame_indices=tuple(fi) if fi is not None else None,
    )


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(json.dumps(trajectory_to_json(traj), indent=1) + "\n")


def read_trajectory(path) -> Trajectory:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in {path}: {e.msg}", line=e.lineno) from None
    return trajectory_from_json(doc)


# --- intrinsics JSON -------------------------------------------------------------------


def intrinsics_from_json(doc: dict) -> CameraIntrinsics:
    try:
        conv = doc.get("convention", "pixel")
        args = {k: float(doc[k]) for k in ("fx", "fy", "cx", "cy")}
        width, height = int(doc["width"]), int(doc["height"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"intrinsics JSON missing/invalid field: {e}") from None
    if conv == "normalized":
        return CameraIntrinsics.from_normalized(width=width, height=height, **args)
    if conv != "pixel":
        raise ParseError(f"unknown intrinsics convention {conv!r}")
    return CameraIntrinsics(width=width, height=height, **args)


def read_intrinsics(path) -> CameraIntrinsics:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in {path}: {e.msg}", line=e.lineno) from None
    return intrinsics_from_json(doc)


def intrinsics_to_json(k: CameraIntrinsics) -> dict:
    return {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": k.width,
        "height": k.height,
        "convention": "pixel",
    }


# --- point cloud PLY ----------------------------------------------------------------------


def encode_pointcloud(cloud: PointCloud) -> bytes:
    """Binary little-endian PLY: double xyz, uchar rgb, uint source pixel index.

    Colors quantize to 8 bits (lossless for PNG-sourced colors); missing
    colors write as white, missing source pixels as 0xffffffff.
    """
    n = len(cloud)
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"comment frame_tag {cloud.frame_tag}",
            f"element vertex {n}",
            "property double x",
            "property double y",
            "property double z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "property uint source_pixel",
            "end_header",
            "",
        ]
    ).encode("ascii")
    colors = cloud.colors if cloud.colors is not None else np.ones((n, 3))
    rgb = np.rint(colors * 255.0).astype(np.uint8)
    src = (
        cloud.source_pixel.astype(np.uint32)
        if cloud.source_pixel is not None
        else np.full(n, 0xFFFFFFFF, dtype=np.uint32)
    )
    rec = np.zeros(
        n,
        dtype=[("xyz", "<f8", 3), ("rgb", "u1", 3), ("src", "<u4")],
    )
    rec["xyz"] = cloud.positions
    rec["rgb"] = rgb
    rec["src"] = src
    return header + rec.tobytes()


def decode_pointcloud(data: bytes) -> PointCloud:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY point cloud", offset=0)
    header = data[:end].decode("ascii", errors="replace").splitlines()
    n = None
    frame_tag = "camera"
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        elif line.startswith("comment frame_tag"):
            frame_tag = line.split()[-1]
    if n is None:
        raise ParseError("PLY header missing vertex element")
    body = data[end + len(b"end_header\n") :]
    rec = np.frombuffer(
        body, dtype=[("xyz", "<f8", 3), ("rgb", "u1", 3), ("src", "<u4")], count=n
    )
    src = rec["src"].astype(np.int64)
    has_src = not np.all(src == 0xFFFFFFFF)
    return PointCloud(
        positions=rec["xyz"].astype(np.float64),
        colors=rec["rgb"].astype(np.float64) / 255.0,
        source_pixel=src if has_src else None,
        frame_tag=frame_tag,
    )


def write_pointcloud(path, cloud: PointCloud) -> None:
    Path(path).write_bytes(encode_pointcloud(cloud))


def read_pointcloud(path) -> PointCloud:
    return decode_pointcloud(Path(path).read_bytes())


# --- reports -----------------------------------------------------------------------------------


def alignment_to_json(a: ScaleAlignment) -> dict:
    return {
        "clip_id": a.clip_id,
        "clip_alpha": a.clip_alpha,
        "frame_medians": {str(k): v for k, v in a.frame_medians.items()},
        "max_frame_factor": a.max_frame_factor,
        "min_frame_factor": a.min_frame_factor,
        "accepted": a.accepted,
        "rejection_reason": a.rejection_reason,
    }


def write_alignment_report(path, alignments) -> None:
    doc = [alignment_to_json(a) for a in alignments]
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


_REPORT_FIELDS = (
    "rot_err",
    "trans_err_relative",
    "trans_err_metric",
    "cam_mc_relative",
    "cam_mc_metric",
    "n_frames",
    "scene_scale_gt",
    "scene_scale_gen",
)


def report_to_json(r: MetricReport) -> dict:
    return {f: getattr(r, f) for f in _REPORT_FIELDS}


def report_from_json(doc: dict) -> MetricReport:
    try:
        return MetricReport(**{k: float(doc[k]) for k in _REPORT_FIELDS})
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"metric report JSON invalid: {e}") from None


def write_metric_report(path, report: MetricReport) -> None:
    Path(path).write_text(json.dumps(report_to_json(report), indent=1, sort_keys=True) + "\n")


METRIC_CSV_HEADER = "sample_id," + ",".join(_REPORT_FIELDS)


def metric_csv_row(sample_id: str, r: MetricReport) -> str:
    vals = [repr(getattr(r, f)) for f in _REPORT_FIELDS]
    return ",".join([sample_id] + vals)


def write_metric_csv(path, rows: dict) -> None:
    """rows: sample_id -> MetricReport."""
    lines = [METRIC_CSV_HEADER]
    lines += [metric_csv_row(sid, r) for sid, r in rows.items()]
    Path(path).write_text("\n".join(lines) + "\n")


SWEEP_CSV_HEADER = "t_ns,masked_rmse,unmasked_variance,seed,steps"


def write_sweep_csv(path, records) -> None:
    lines = [SWEEP_CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.t_ns},{repr(r.masked_rmse)},{repr(r.unmasked_variance)},{r.seed},{r.steps}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
