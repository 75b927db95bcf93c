"""Tactile representations fed to the policy: RGB, Diff and Binary.

Diff is the channel-averaged absolute difference against the force-free
canonical frame; Binary thresholds Diff at phi. Right-sensor images are
horizontally flipped so both fingers share one orientation convention.
Training-time augmentation randomly rescales, erases rectangles, and (for
RGB) jitters brightness/contrast/hue.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Sensor
from .render import TactileFrame, _rotate_hue
from .scene import ConfigError


class ReprMode(enum.Enum):
    RGB = "rgb"
    DIFF = "diff"
    BINARY = "binary"


@dataclass(frozen=True)
class ReprConfig:
    mode: ReprMode = ReprMode.BINARY
    phi: float = 0.05
    augment: bool = False
    scale_range: tuple = (0.2, 1.0)
    erase_prob: float = 0.5
    erase_max_frac: float = 0.2
    jitter_brightness: float = 0.2
    jitter_contrast: tuple = (0.8, 1.2)
    jitter_hue_deg: float = 15.0

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ConfigError(f"phi must lie in (0, 1), got {self.phi}")
        if self.scale_range[0] > self.scale_range[1]:
            raise ConfigError(f"bad scale_range {self.scale_range}")
        if self.erase_max_frac > 0.25:
            raise ConfigError(f"erase_max_frac too large: {self.erase_max_frac}")

    @property
    def channels(self) -> int:
        return 3 if self.mode is ReprMode.RGB else 1


def diff_image(frame: TactileFrame, canonical: TactileFrame) -> np.ndarray:
    """Channel-mean absolute difference; (res, res, 1) in [0, 1]."""
    if frame.rgb.shape != canonical.rgb.shape:
        raise ValueError(
            f"shape mismatch: {frame.rgb.shape} vs {canonical.rgb.shape}"
        )
    d = np.abs(frame.rgb.astype(np.float64) - canonical.rgb.astype(np.float64))
    return d.mean(axis=-1, keepdims=True).astype(np.float32)


def binarize(diff: np.ndarray, phi: float) -> np.ndarray:
    """Contacted/non-contacted mask: 1 where diff > phi."""
    if not 0.0 < phi < 1.0:
        raise ConfigError(f"phi must lie in (0, 1), got {phi}")
    return (diff > phi).astype(np.float32)


def flip_right(image: np.ndarray, sensor: Sensor) -> np.ndarray:
    """Mirror right-sensor images about the vertical axis; left unchanged."""
    if sensor is Sensor.RIGHT:
        return image[:, ::-1].copy()
    return image


def augment(image: np.ndarray, cfg: ReprConfig, rng: np.random.Generator) -> np.ndarray:
    """Training-time augmentation; output stays in [0, 1].

    Diff/Binary get a global scale and random erase; RGB additionally gets
    brightness, contrast and hue jitter.
    """
    out = image.astype(np.float32).copy()
    if cfg.mode is ReprMode.RGB:
        b = rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness)
        c = rng.uniform(*cfg.jitter_contrast)
        hue = rng.uniform(-cfg.jitter_hue_deg, cfg.jitter_hue_deg)
        flat = out.reshape(-1, 3)
        flat = _rotate_hue(flat.astype(np.float64), hue)
        out = flat.reshape(out.shape).astype(np.float32)
        out = (out - 0.5) * c + 0.5 + b
    s = rng.uniform(*cfg.scale_range)
    out = out * s
    if rng.random() < cfg.erase_prob:
        h, w = out.shape[:2]
        frac = rng.uniform(0.0, cfg.erase_max_frac)
        area = frac * h * w
        if area >= 1.0:
            eh = int(rng.integers(1, max(2, int(math.sqrt(area)) + 1)))
            ew = max(1, int(area / eh))
            ew = min(ew, w)
            eh = min(eh, h)
            r0 = int(rng.integers(0, h - eh + 1))
            c0 = int(rng.integers(0, w - ew + 1))
            out[r0 : r0 + eh, c0 : c0 + ew] = 0.0
    return np.clip(out, 0.0, 1.0)


def process_frame(
    frame: TactileFrame,
    canonical: TactileFrame,
    cfg: ReprConfig,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> np.ndarray:
    """Full pipeline: representation, right-flip, optional augmentation."""
    if cfg.mode is ReprMode.RGB:
        img = frame.rgb.astype(np.float32)
    else:
        img = diff_image(frame, canonical)
        if cfg.mode is ReprMode.BINARY:
            img = binarize(img, cfg.phi)
    img = flip_right(img, frame.sensor)
    if training and cfg.augment:
        if rng is None:
            raise ValueError("augmentation requires an rng")
        img = augment(img, cfg, rng)
    return img
