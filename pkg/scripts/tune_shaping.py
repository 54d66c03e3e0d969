"""Dev experiment: measure shaping-efficacy margins for the pull oracle
across schedules, pull strengths and seeds. Not part of the deliverable tests."""

import numpy as np

from camscene.renderer import RenderedFrame, ShapingMask
from camscene.shaping import (
    LatentVideo,
    NoiseSchedule,
    PullOracle,
    ShapingConfig,
    default_step_list,
    masked_rmse_to_preview,
    sample_with_shaping,
    threshold_sweep,
)

F, H, W = 16, 32, 32


def pattern_video(kind: str) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    frames = []
    for f in range(F):
        if kind == "preview":
            base = 0.5 + 0.5 * np.sin(2 * np.pi * (xx / W + f / F))
            ch = [base, 0.5 + 0.5 * np.cos(2 * np.pi * yy / H), np.full((H, W), 0.3)]
        else:
            base = 0.5 + 0.5 * np.cos(2 * np.pi * (yy / H - f / F))
            ch = [np.full((H, W), 0.7), base, 0.5 + 0.5 * np.sin(2 * np.pi * xx / W)]
        frames.append(np.stack(ch, axis=-1))
    return np.stack(frames)


def build_cfg(seed):
    pv = pattern_video("preview")
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    mask = ((xx + yy) % 3 != 0)  # ~2/3 true
    frames, masks = [], []
    for f in range(F):
        vis = np.ones((H, W), dtype=bool)
        frames.append(RenderedFrame(pv[f], np.ones((H, W)), vis))
        masks.append(ShapingMask(mask, 3))
    return ShapingConfig(preview=tuple(frames), masks=tuple(masks), t_ns=900, rng_seed=seed)


def run(schedule_name, strength):
    sched = (
        NoiseSchedule.linear_beta()
        if schedule_name == "linear_beta"
        else NoiseSchedule.linear_alpha_bar()
    )
    steps = default_step_list(sched, 50)
    target = LatentVideo(pattern_video("target"))
    oracle = PullOracle(target, sched, strength=strength)
    wins, margins = 0, []
    for seed in range(10):
        cfg = build_cfg(seed)
        init = LatentVideo(np.random.default_rng((seed, 999)).standard_normal((F, H, W, 3)))
        from dataclasses import replace

        shaped = sample_with_shaping(oracle, replace(cfg, t_ns=900), sched, steps, init)
        unshaped = sample_with_shaping(oracle, replace(cfg, t_ns=sched.num_steps), sched, steps, init)
        r_s = masked_rmse_to_preview(shaped, cfg)
        r_u = masked_rmse_to_preview(unshaped, cfg)
        wins += r_s < r_u
        margins.append(r_u - r_s)
        if seed == 0:
            recs = threshold_sweep(oracle, cfg, sched, [1000, 900, 800, 600], steps, init)
            mono = all(
                a.masked_rmse >= b.masked_rmse for a, b in zip(recs, recs[1:])
            )
            print(
                f"  sweep rmse: "
                + " ".join(f"{r.t_ns}:{r.masked_rmse:.5f}" for r in recs)
                + f"  monotone={mono}"
            )
    m = np.array(margins)
    print(
        f"{schedule_name} strength={strength}: wins {wins}/10, "
        f"margin mean={m.mean():.3e} min={m.min():.3e} sd={m.std():.2e}"
    )


for sched in ("linear_beta", "linear_alpha_bar"):
    for s in (0.4, 0.6, 0.8):
        run(sched, s)
