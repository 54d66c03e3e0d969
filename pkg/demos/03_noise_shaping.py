"""Scene-constrained noise shaping at work: shape a sampling run toward a
preview video in the masked region, then sweep the threshold t_ns and watch
adherence trade off against retained dynamics."""

from dataclasses import replace

import numpy as np

from camscene import (
    LatentVideo,
    NoiseSchedule,
    PullOracle,
    ShapingConfig,
    TrueEpsOracle,
    add_noise,
    default_step_list,
    sample_with_shaping,
    threshold_sweep,
)
from camscene.renderer import RenderedFrame, ShapingMask
from camscene.shaping import masked_rmse_to_preview

F, H, W = 8, 24, 24
yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")

preview_vals = np.stack(
    [
        np.stack(
            [
                0.5 + 0.5 * np.sin(2 * np.pi * (xx / W + f / F)),
                0.5 + 0.5 * np.cos(2 * np.pi * yy / H),
                np.full((H, W), 0.3),
            ],
            axis=-1,
        )
        for f in range(F)
    ]
)
target_vals = 1.0 - preview_vals  # what the "model" wants to paint instead

mask = (xx + yy) % 3 != 0
frames = tuple(RenderedFrame(preview_vals[f], np.ones((H, W)), np.ones((H, W), bool)) for f in range(F))
masks = tuple(ShapingMask(mask, 3) for _ in range(F))
cfg = ShapingConfig(preview=frames, masks=masks, t_ns=900, rng_seed=3)

schedule = NoiseSchedule.linear_alpha_bar()
steps = default_step_list(schedule, 50)
oracle = PullOracle(LatentVideo(target_vals), schedule, strength=0.4)
init = LatentVideo(np.random.default_rng(99).standard_normal((F, H, W, 3)))

shaped = sample_with_shaping(oracle, cfg, schedule, steps, init)
unshaped = sample_with_shaping(oracle, replace(cfg, t_ns=schedule.num_steps), schedule, steps, init)
print("masked-region RMSE to the preview:")
print(f"  shaped at t_ns=900: {masked_rmse_to_preview(shaped, cfg):.4f}")
print(f"  shaping disabled:   {masked_rmse_to_preview(unshaped, cfg):.4f}")

print("\nthreshold sweep (lower t_ns = more shaped steps = closer to preview):")
for rec in threshold_sweep(oracle, cfg, schedule, [1000, 900, 800, 600], steps, init):
    print(
        f"  t_ns={rec.t_ns:4d}  masked_rmse={rec.masked_rmse:.4f}  "
        f"unmasked_variance={rec.unmasked_variance:.4f}"
    )

# sanity: with the true-noise oracle and no shaping, sampling inverts exactly
z0 = LatentVideo(preview_vals)
eps = LatentVideo(np.random.default_rng(1).standard_normal((F, H, W, 3)))
noisy = add_noise(z0, schedule.num_steps, eps, schedule)
recovered = sample_with_shaping(
    TrueEpsOracle(z0, schedule), replace(cfg, t_ns=schedule.num_steps), schedule, steps, noisy
)
rmse = float(np.sqrt(np.mean((recovered.values - z0.values) ** 2)))
print(f"\ntrue-eps oracle recovery RMSE (should be ~0): {rmse:.2e}")
