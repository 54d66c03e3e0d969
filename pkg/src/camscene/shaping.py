"""Noise schedule, forward noising, scene-constrained noise shaping and a
deterministic sampler with pluggable denoisers.

The sampler operates on pixel-space video rasters standing in for VAE
latents (identity encoder): an F x H x W x C array evolved from pure noise
to a clean estimate. Shaping overwrites masked pixels at high-noise steps
with the renoised preview video, re-sampling epsilon at every shaped step
from a stream keyed by (seed, step, frame) so runs are reproducible and
shaped steps are independent of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalFloorError, ShapeMismatchError, ValidationError
from .rasters import _frozen
from .renderer import RenderedFrame, ShapingMask

DEFAULT_NUM_STEPS = 1000
ALPHA_FLOOR = 1e-6

# function (z_t values, t, conditions) -> predicted epsilon
Denoiser = Callable[[np.ndarray, int, dict | None], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    """Table of cumulative signal fractions alpha_bar over steps 0..num_steps.

    alpha(t) = sqrt(alpha_bar[t]) and sigma(t) = sqrt(1 - alpha_bar[t]), so
    alpha^2 + sigma^2 == 1 holds exactly at the stored-square level
    (alpha_sq + sigma_sq) for every step.
    """

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise ValidationError("alpha_bar must be a 1-D table with at least 2 entries")
        if not np.all(np.isfinite(ab)):
            raise ValidationError("alpha_bar contains non-finite entries")
        if ab.min() <= 0.0 or ab.max() > 1.0:
            raise ValidationError("alpha_bar values must lie in (0, 1]")
        if not np.all(np.diff(ab) < 0.0):
            raise ValidationError("alpha_bar must be strictly decreasing")
        if np.sqrt(ab[0]) < 1.0 - 1e-6:
            raise ValidationError("alpha(0) must be 1 within 1e-6")
        object.__setattr__(self, "alpha_bar", _frozen(ab))

    @classmethod
    def linear_beta(
        cls,
        num_steps: int = DEFAULT_NUM_STEPS,
        beta_start: float = 1e-4,
        beta_end: float = 2e-2,
    ) -> "NoiseSchedule":
        """Cumulative product of (1 - beta) for beta linearly spaced over num_steps."""
        beta = np.linspace(beta_start, beta_end, num_steps)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
        return cls(ab)

    @classmethod
    def linear_alpha_bar(cls, num_steps: int = DEFAULT_NUM_STEPS) -> "NoiseSchedule":
        """alpha_bar decreasing linearly from 1; keeps a usable signal fraction
        at high steps, which makes desk-scale shaping experiments well-conditioned."""
        t = np.arange(num_steps + 1)
        return cls(1.0 - t / (num_steps + 1))

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.size - 1

    def _check(self, t: int) -> int:
        t = int(t)
        if not (0 <= t <= self.num_steps):
            raise ValidationError(f"step {t} outside [0, {self.num_steps}]")
        return t

    def alpha_sq(self, t: int) -> float:
        return float(self.alpha_bar[self._check(t)])

    def sigma_sq(self, t: int) -> float:
        return 1.0 - float(self.alpha_bar[self._check(t)])

    def alpha(self, t: int) -> float:
        return float(np.sqrt(self.alpha_sq(t)))

    def sigma(self, t: int) -> float:
        return float(np.sqrt(self.sigma_sq(t)))


@dataclass(frozen=True)
class LatentVideo:
    """F x H x W x C sample tensor; shape is constant through a sampling run."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValidationError(f"latent video must be F x H x W x C, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("latent video contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self):
        return self.values.shape


def preview_to_latent(frames: Sequence[RenderedFrame]) -> LatentVideo:
    """Stack preview frame colors into a latent video (identity encoder)."""
    if not frames:
        raise ValidationError("preview must contain at least one frame")
    return LatentVideo(np.stack([f.color for f in frames]))


@dataclass(frozen=True)
class ShapingConfig:
    """Everything shaping needs: threshold, preview content, masks and seed."""

    preview: tuple
    masks: tuple
    t_ns: int = 900
    kernel: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        preview = tuple(self.preview)
        masks = tuple(self.masks)
        if len(preview) != len(masks) or not preview:
            raise ValidationError("preview and masks must be equal-length and non-empty")
        for f, (frame, m) in enumerate(zip(preview, masks)):
            if not isinstance(frame, RenderedFrame) or not isinstance(m, ShapingMask):
                raise ValidationError("preview entries must be RenderedFrame, masks ShapingMask")
            if m.mask.shape != frame.visibility.shape:
                raise ShapeMismatchError(f"mask {f} shape does not match its preview frame")
            if np.any(m.mask & ~frame.visibility):
                raise ValidationError(f"mask {f} selects invisible pixels")
        if self.t_ns < 0:
            raise ValidationError("t_ns must be >= 0")
        if self.rng_seed < 0:
            raise ValidationError("rng_seed must be >= 0")
        object.__setattr__(self, "preview", preview)
        object.__setattr__(self, "masks", masks)

    @property
    def num_frames(self) -> int:
        return len(self.preview)

    def preview_values(self) -> np.ndarray:
        return np.stack([f.color for f in self.preview])

    def mask_values(self) -> np.ndarray:
        return np.stack([m.mask for m in self.masks])


@dataclass(frozen=True)
class ConditionMode:
    """Which frames stay clean as conditions: basic, interpolation or continuation."""

    mode: str
    cond_index: int = 0

    def __post_init__(self):
        if self.mode not in ("basic", "interpolation", "continuation"):
            raise ValidationError(f"unknown condition mode {self.mode!r}")


def condition_mask(mode: ConditionMode, num_frames: int) -> list:
    """Per-frame booleans marking condition (clean) frames for the given mode."""
    i = mode.cond_index
    if not (0 <= i < num_frames):
        raise ValidationError(f"condition index {i} outside [0, {num_frames})")
    if mode.mode == "interpolation" and num_frames < 2:
        raise ValidationError("interpolation mode needs at least 2 frames")
    flags = [False] * num_frames
    if mode.mode == "basic":
        flags[i] = True
    elif mode.mode == "interpolation":
        flags[i] = True
        flags[num_frames - 1] = True
    else:  # continuation: every frame up to and including i conditions
        for f in range(i + 1):
            flags[f] = True
    return flags


def add_noise(z0: LatentVideo, t: int, eps: LatentVideo, schedule: NoiseSchedule) -> LatentVideo:
    """Forward process: alpha_t * z0 + sigma_t * eps."""
    if z0.shape != eps.shape:
        raise ShapeMismatchError(f"z0 shape {z0.shape} != eps shape {eps.shape}")
    return LatentVideo(schedule.alpha(t) * z0.values + schedule.sigma(t) * eps.values)


def fresh_eps(seed: int, t: int, shape) -> LatentVideo:
    """Per-call noise from a stream keyed by (seed, step, frame)."""
    f, h, w, c = shape
    frames = [
        np.random.default_rng((seed, t, frame)).standard_normal((h, w, c))
        for frame in range(f)
    ]
    return LatentVideo(np.stack(frames))


def shape_latent(
    z_t: LatentVideo,
    cfg: ShapingConfig,
    t: int,
    eps: LatentVideo,
    schedule: NoiseSchedule,
) -> LatentVideo:
    """Overwrite masked pixels with the renoised preview; untouched elsewhere.

    masked: alpha_t * preview + sigma_t * eps; unmasked values pass through
    bit-exactly.
    """
    if t <= cfg.t_ns:
        raise ValidationError(f"shaping requested at step {t} <= threshold {cfg.t_ns}")
    f, h, w, c = z_t.shape
    if f != cfg.num_frames:
        raise ShapeMismatchError(f"latent has {f} frames but config has {cfg.num_frames}")
    preview = cfg.preview_values()
    if preview.shape != z_t.shape:
        raise ShapeMismatchError(f"preview shape {preview.shape} != latent shape {z_t.shape}")
    if eps.shape != z_t.shape:
        raise ShapeMismatchError("eps shape mismatch")
    shaped = schedule.alpha(t) * preview + schedule.sigma(t) * eps.values
    mask = cfg.mask_values()[..., None]
    return LatentVideo(np.where(mask, shaped, z_t.values))


def sampler_step(
    denoiser: Denoiser,
    z_t: LatentVideo,
    t: int,
    t_prev: int,
    schedule: NoiseSchedule,
    conditions: dict | None = None,
) -> LatentVideo:
    """Deterministic update t -> t_prev under the eps parameterization.

    z0_hat = (z_t - sigma_t eps_hat) / alpha_t, then renoise to t_prev with
    the same eps_hat (no stochastic term).
    """
    if not (t > t_prev >= 0):
        raise ValidationError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    a_t = schedule.alpha(t)
    if a_t < ALPHA_FLOOR:
        raise NumericalFloorError(f"alpha({t}) = {a_t:.3e} below the {ALPHA_FLOOR} floor")
    eps_hat = np.asarray(denoiser(z_t.values, t, conditions))
    if eps_hat.shape != z_t.shape:
        raise ShapeMismatchError("denoiser output shape does not match the latent")
    z0_hat = (z_t.values - schedule.sigma(t) * eps_hat) / a_t
    return LatentVideo(schedule.alpha(t_prev) * z0_hat + schedule.sigma(t_prev) * eps_hat)


def default_step_list(schedule: NoiseSchedule, n_steps: int = 50) -> list:
    """n_steps evenly spaced sampler steps from num_steps down to 0."""
    if not (1 <= n_steps <= schedule.num_steps):
        raise ValidationError(f"n_steps must be in [1, {schedule.num_steps}]")
    steps = np.linspace(schedule.num_steps, 0, n_steps + 1)
    return [int(round(s)) for s in steps]


def sample_with_shaping(
    denoiser: Denoiser,
    cfg: ShapingConfig,
    schedule: NoiseSchedule,
    step_list: Sequence[int],
    init: LatentVideo,
    conditions: dict | None = None,
) -> LatentVideo:
    """Run the deterministic sampler over step_list, shaping at steps above t_ns.

    step_list must be strictly descending and end at 0; init plays the role
    of the pure-noise sample at step_list[0]. Returns the final clean
    estimate.
    """
    steps = [int(s) for s in step_list]
    if len(steps) < 2 or steps[-1] != 0:
        raise ValidationError("step_list must contain at least two steps and end at 0")
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValidationError("step_list must be strictly descending")
    if steps[0] > schedule.num_steps:
        raise ValidationError("step_list exceeds the schedule range")
    if cfg.t_ns > schedule.num_steps:
        raise ValidationError(f"t_ns {cfg.t_ns} exceeds schedule num_steps {schedule.num_steps}")
    if init.shape[0] != cfg.num_frames:
        raise ShapeMismatchError("init frame count does not match the shaping config")

    z = init
    for t, t_prev in zip(steps, steps[1:]):
        if t > cfg.t_ns:
            z = shape_latent(z, cfg, t, fresh_eps(cfg.rng_seed, t, z.shape), schedule)
        z = sampler_step(denoiser, z, t, t_prev, schedule, conditions)
    return z


# --- test denoisers ---------------------------------------------------------


class TrueEpsOracle:
    """Knows the ground-truth clean video; returns the exact noise in z_t."""

    def __init__(self, z0: LatentVideo, schedule: NoiseSchedule):
        self.z0 = z0.values
        self.schedule = schedule

    def __call__(self, z_t: np.ndarray, t: int, conditions=None) -> np.ndarray:
        sigma = self.schedule.sigma(t)
        if sigma <= 0.0:
            return np.zeros_like(z_t)
        return (z_t - self.schedule.alpha(t) * self.z0) / sigma


class PullOracle:
    """Predicts noise consistent with pulling the clean estimate toward a target.

    z0_hat = (1 - strength) * z_t + strength * target; strength = 1 is the
    pure form whose clean estimate is the target itself.
    """

    def __init__(self, target: LatentVideo, schedule: NoiseSchedule, strength: float = 0.6):
        if not (0.0 < strength <= 1.0):
            raise ValidationError(f"pull strength must be in (0, 1], got {strength}")
        self.target = target.values
        self.schedule = schedule
        self.strength = float(strength)

    def __call__(self, z_t: np.ndarray, t: int, conditions=None) -> np.ndarray:
        z0_hat = (1.0 - self.strength) * z_t + self.strength * self.target
        sigma = max(self.schedule.sigma(t), 1e-12)
        return (z_t - self.schedule.alpha(t) * z0_hat) / sigma


class NoisePredictor:
    """Degenerate control: declares the whole input to be noise (clean estimate 0)."""

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    def __call__(self, z_t: np.ndarray, t: int, conditions=None) -> np.ndarray:
        return z_t / max(self.schedule.sigma(t), 1e-12)


# --- threshold sweep ---------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    t_ns: int
    masked_rmse: float
    unmasked_variance: float
    seed: int
    steps: int


def masked_rmse_to_preview(result: LatentVideo, cfg: ShapingConfig) -> float:
    """RMSE between the final sample and the preview over masked pixels."""
    mask = cfg.mask_values()[..., None]
    diff = (result.values - cfg.preview_values())[np.broadcast_to(mask, result.shape)]
    if diff.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(diff**2)))


def unmasked_variance(result: LatentVideo, cfg: ShapingConfig) -> float:
    """Sample variance outside the masks; a crude proxy for retained dynamics."""
    mask = cfg.mask_values()[..., None]
    vals = result.values[~np.broadcast_to(mask, result.shape)]
    if vals.size == 0:
        return 0.0
    return float(np.var(vals))


def threshold_sweep(
    denoiser: Denoiser,
    cfg_base: ShapingConfig,
    schedule: NoiseSchedule,
    thresholds: Sequence[int],
    step_list: Sequence[int],
    init: LatentVideo,
) -> list:
    """Re-run sampling at each threshold with identical seed/init and report
    masked RMSE to the preview plus unmasked sample variance."""
    records = []
    for t_ns in thresholds:
        t_ns = int(t_ns)
        if not (0 <= t_ns <= schedule.num_steps):
            raise ValidationError(f"threshold {t_ns} outside [0, {schedule.num_steps}]")
        cfg = replace(cfg_base, t_ns=t_ns)
        result = sample_with_shaping(denoiser, cfg, schedule, step_list, init)
        records.append(
            SweepRecord(
                t_ns=t_ns,
                masked_rmse=masked_rmse_to_preview(result, cfg),
                unmasked_variance=unmasked_variance(result, cfg),
                seed=cfg.rng_seed,
                steps=len(step_list) - 1,
            )
        )
    return records
