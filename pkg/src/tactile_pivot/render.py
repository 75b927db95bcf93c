"""Gel-sensor image synthesis.

A contact patch is rasterized into a 64x64 indentation height map over the
sensor window, smoothed to mimic gel elasticity, and shaded with three
colored directional lights under Phong's illumination model. Everything is
deterministic in the config; the zero-force render is the canonical frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .dynamics import PatchGeometry, Sensor

RESOLUTION = 64


@dataclass(frozen=True)
class RenderConfig:
    window_x: float = 0.020         # m, horizontal extent of the gel window
    window_y: float = 0.025         # m, vertical extent
    resolution: int = RESOLUTION
    sigma_gel_px: float = 2.0
    d_max: float = 1.5e-3
    slope_gain: float = 8.0        # optical gain on surface gradients before shading
    proximity_gain: float = 0.4    # brightening of gel pressed toward the camera
    k_ambient: float = 0.6
    k_diffuse: float = 0.5
    k_specular: float = 0.3
    shininess: float = 16.0
    ambient_color: tuple = (0.15, 0.15, 0.18)
    light_azimuths_deg: tuple = (90.0, 210.0, 330.0)
    light_elevation_deg: float = 70.0
    light_colors: tuple = ((1.0, 0.3, 0.3), (0.3, 1.0, 0.3), (0.3, 0.3, 1.0))
    light_intensity: float = 1.0 / 3.0   # per-light scale; keeps flat shading unclipped
    # evaluation-time perturbation hooks; identity by default
    gain: float = 1.0
    hue_rotation_deg: float = 0.0
    noise_sigma: float = 0.0
    indent_scale: float = 1.0
    background_texture: bool = False


_GRID_CACHE: dict = {}


def _pixel_grid(cfg: RenderConfig):
    key = (cfg.resolution, cfg.window_x, cfg.window_y)
    cached = _GRID_CACHE.get(key)
    if cached is None:
        n = cfg.resolution
        xs = (np.arange(n) + 0.5) / n * cfg.window_x - cfg.window_x / 2.0
        ys = cfg.window_y / 2.0 - (np.arange(n) + 0.5) / n * cfg.window_y
        # row index increases downward; column rightward
        cached = np.meshgrid(xs, ys)
        for a in cached:
            a.setflags(write=False)
        _GRID_CACHE[key] = cached
    return cached


def heightmap_from_patch(patch: PatchGeometry, cfg: RenderConfig) -> np.ndarray:
    """Rasterize a patch onto the sensor grid and smooth it.

    Returns a float32 (res, res) array of indentation depths in meters,
    clamped to [0, d_max].
    """
    n = cfg.resolution
    if not patch.present or patch.indent <= 0.0:
        return np.zeros((n, n), dtype=np.float32)
    X, Y = _pixel_grid(cfg)
    ax, ay = math.sin(patch.angle), math.cos(patch.angle)
    s = patch.grasp_s + X * ax + Y * ay
    p = -X * ay + Y * ax
    shape = patch.shape
    inside = (s >= 0.0) & (s <= shape.length) & (np.abs(p) <= shape.half_width(s))
    indent = min(patch.indent * cfg.indent_scale, cfg.d_max)
    height = np.where(inside, indent, 0.0)
    if cfg.sigma_gel_px > 0.0:
        height = gaussian_filter(height, sigma=cfg.sigma_gel_px, mode="constant")
    return np.clip(height, 0.0, cfg.d_max).astype(np.float32)


@dataclass(frozen=True)
class TactileFrame:
    rgb: np.ndarray       # (res, res, 3) float32 in [0, 1]
    height: np.ndarray    # (res, res) float32, m
    sensor: Sensor


def _light_dirs(cfg: RenderConfig) -> np.ndarray:
    el = math.radians(cfg.light_elevation_deg)
    dirs = []
    for az_deg in cfg.light_azimuths_deg:
        az = math.radians(az_deg)
        dirs.append(
            (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))
        )
    return np.array(dirs, dtype=np.float64)


def _rotate_hue(colors: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate RGB colors about the gray axis (hue shift)."""
    if degrees == 0.0:
        return colors
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    one_third = 1.0 / 3.0
    sq = math.sqrt(1.0 / 3.0)
    m = np.full((3, 3), one_third * (1.0 - c))
    m += c * np.eye(3)
    off = sq * s
    m += off * np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0]], dtype=np.float64)
    return np.clip(colors @ m.T, 0.0, None)


def _ipow(x: np.ndarray, p: float) -> np.ndarray:
    """x**p, by repeated squaring when p is a power of two."""
    n = int(p)
    if n != p or n & (n - 1):
        return x**p
    y = x
    while n > 1:
        y = y * y
        n >>= 1
    return y


def render_phong(
    height: np.ndarray, cfg: RenderConfig, sensor: Sensor = Sensor.LEFT, rng=None
) -> TactileFrame:
    """Shade a height map with three colored directional lights.

    Per-pixel normals come from central differences of the indentation
    field (deeper press pushes the surface toward the camera at +z).
    Optional gain/hue/noise/background perturbations model miscalibrated
    sensors; all identity at defaults.
    """
    h = np.asarray(height, dtype=np.float64)
    n = cfg.resolution
    px = cfg.window_x / n
    py = cfg.window_y / n
    gx = np.zeros_like(h)
    gy = np.zeros_like(h)
    gx[:, 1:-1] = (h[:, 2:] - h[:, :-2]) / (2 * px)
    gx[:, 0] = (h[:, 1] - h[:, 0]) / px
    gx[:, -1] = (h[:, -1] - h[:, -2]) / px
    gy[1:-1, :] = (h[:-2, :] - h[2:, :]) / (2 * py)
    gy[0, :] = (h[0, :] - h[1, :]) / py
    gy[-1, :] = (h[-2, :] - h[-1, :]) / py
    gx *= cfg.slope_gain
    gy *= cfg.slope_gain
    normals = np.stack([-gx, -gy, np.ones_like(h)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)

    lights = _light_dirs(cfg)
    colors = _rotate_hue(np.asarray(cfg.light_colors, dtype=np.float64), cfg.hue_rotation_deg)
    ambient = _rotate_hue(
        np.asarray(cfg.ambient_color, dtype=np.float64)[None, :], cfg.hue_rotation_deg
    )[0]

    img = np.empty((n, n, 3), dtype=np.float64)
    img[:] = cfg.k_ambient * ambient
    # viewer is (0,0,1), so r.v is simply the reflection's z-component
    for ldir, lcol in zip(lights, colors):
        ndotl = np.maximum(normals @ ldir, 0.0)
        rdotv = np.maximum(2.0 * ndotl * normals[..., 2] - ldir[2], 0.0)
        shade = cfg.k_diffuse * ndotl + cfg.k_specular * _ipow(rdotv, cfg.shininess)
        img += cfg.light_intensity * shade[..., None] * lcol[None, None, :]

    if cfg.proximity_gain:
        img += (cfg.proximity_gain / cfg.d_max) * h[..., None]

    if cfg.background_texture:
        X, Y = _pixel_grid(cfg)
        tex = 0.02 * np.sin(2 * np.pi * X / 0.004) * np.sin(2 * np.pi * Y / 0.004)
        img += tex[..., None]
    img *= cfg.gain
    if cfg.noise_sigma > 0.0 and rng is not None:
        img += rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return TactileFrame(img.astype(np.float32), np.asarray(height, np.float32), sensor)


_CANONICAL_CACHE: dict = {}


def canonical_image(cfg: RenderConfig, sensor: Sensor = Sensor.LEFT) -> TactileFrame:
    """Force-free render under this config; cached."""
    key = (cfg, sensor)
    frame = _CANONICAL_CACHE.get(key)
    if frame is None:
        zero = np.zeros((cfg.resolution, cfg.resolution), dtype=np.float32)
        frame = render_phong(zero, cfg, sensor)
        _CANONICAL_CACHE[key] = frame
    return frame
