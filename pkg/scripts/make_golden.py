"""Run the full CLI pipeline on the bundled fixtures and freeze output hashes.

Run from the repo root after make_fixtures.py:
    python3 scripts/make_golden.py
Writes tests/fixtures/golden/manifest.json plus reference copies of the small
text outputs for human inspection.
"""

import hashlib
import json
import shutil
import tempfile
from pathlib import Path

from camscene.cli import main

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
SCENE = FIXTURES / "scene"
CLIP = FIXTURES / "clip"


def pipeline_commands(out: Path) -> list:
    return [
        [
            "reconstruct",
            "--image", str(SCENE / "image.png"),
            "--depth", str(SCENE / "depth.pfm"),
            "--intrinsics", str(SCENE / "intrinsics.json"),
            "--out-cloud", str(out / "cloud.ply"),
        ],
        [
            "interp",
            "--keyframes", str(SCENE / "keyframes.json"),
            "--frames", "16",
            "--out", str(out / "traj16.json"),
        ],
        [
            "preview",
            "--cloud", str(out / "cloud.ply"),
            "--traj", str(out / "traj16.json"),
            "--intrinsics", str(SCENE / "intrinsics.json"),
            "--out-dir", str(out / "preview"),
            "--radius", "1",
            "--kernel", "3",
            "--save-depth",
        ],
        [
            "shape",
            "--preview-dir", str(out / "preview"),
            "--masks-dir", str(out / "preview"),
            "--tns", "900",
            "--steps", "20",
            "--seed", "7",
            "--denoiser", "pull",
            "--schedule", "linear_alpha_bar",
            "--out", str(out / "shaped"),
        ],
        [
            "sweep",
            "--preview-dir", str(out / "preview"),
            "--masks-dir", str(out / "preview"),
            "--tns", "600,800,900,1000",
            "--steps", "20",
            "--seed", "7",
            "--denoiser", "pull",
            "--schedule", "linear_alpha_bar",
            "--out", str(out / "sweep.csv"),
        ],
        [
            "eval",
            "--gt", str(out / "traj16.json"),
            "--gen", str(SCENE / "gen_perturbed.json"),
            "--mode", "both",
            "--out", str(out / "eval.json"),
        ],
        [
            "align",
            "--colmap-dir", str(CLIP / "colmap"),
            "--depths-dir", str(CLIP / "depths"),
            "--poses", str(CLIP / "poses.txt"),
            "--out-report", str(out / "align.json"),
            "--out-poses", str(out / "metric_poses"),
        ],
    ]


def run_pipeline(out: Path) -> None:
    for cmd in pipeline_commands(out):
        rc = main(cmd)
        if rc != 0:
            raise SystemExit(f"command failed ({rc}): {' '.join(cmd)}")


def manifest_of(out: Path) -> dict:
    entries = {}
    for path in sorted(out.rglob("*")):
        if path.is_file():
            entries[path.relative_to(out).as_posix()] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return entries


if __name__ == "__main__":
    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        out = Path(td)
        run_pipeline(out)
        manifest = manifest_of(out)
        (golden / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        for name in ("traj16.json", "eval.json", "align.json", "sweep.csv"):
            shutil.copy(out / name, golden / name)
    print(f"golden manifest with {len(manifest)} entries -> {golden / 'manifest.json'}")
