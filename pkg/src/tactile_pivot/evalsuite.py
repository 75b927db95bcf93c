"""Evaluation harness: multi-seed statistics, the threshold grid search,
and the domain-shift robustness suite used as the desk-scale stand-in for
transferring to a physical, miscalibrated sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import net, ppo
from .dynamics import Action, DynamicsConfig, Sensor, contact_patch, step_dynamics
from .env import PivotEnv
from .render import RenderConfig, canonical_image, heightmap_from_patch, render_phong
from .reprs import ReprConfig, binarize, diff_image


@dataclass(frozen=True)
class EvalReport:
    label: str
    n_episodes: int
    mean_deviation: float
    std_deviation: float
    success_rate: float
    std_success: float
    per_family: dict = field(default_factory=dict)

    def row(self):
        return [
            self.label,
            self.n_episodes,
            f"{self.mean_deviation:.6f}",
            f"{self.std_deviation:.6f}",
            f"{self.success_rate:.6f}",
            f"{self.std_success:.6f}",
        ]


@dataclass(frozen=True)
class ShiftSpec:
    """One named perturbation of the renderer/dynamics constants."""

    label: str
    hue_rotation_deg: float = 0.0
    gain: float = 1.0
    noise_sigma: float = 0.0
    phi_offset: float = 0.0
    indent_scale: float = 1.0
    background_texture: bool = False
    k_table_scale: float = 1.0

    def apply(self, render_cfg: RenderConfig, dyn_cfg: DynamicsConfig, repr_cfg: ReprConfig):
        r = replace(
            render_cfg,
            hue_rotation_deg=render_cfg.hue_rotation_deg + self.hue_rotation_deg,
            gain=render_cfg.gain * self.gain,
            noise_sigma=render_cfg.noise_sigma + self.noise_sigma,
            indent_scale=render_cfg.indent_scale * self.indent_scale,
            background_texture=render_cfg.background_texture or self.background_texture,
        )
        d = replace(dyn_cfg, k_table=dyn_cfg.k_table * self.k_table_scale)
        phi = min(max(repr_cfg.phi + self.phi_offset, 1e-3), 1.0 - 1e-3)
        p = replace(repr_cfg, phi=phi)
        return r, d, p


def default_shift_suite() -> list[ShiftSpec]:
    return [
        ShiftSpec("hue+20", hue_rotation_deg=20.0),
        ShiftSpec("hue-20", hue_rotation_deg=-20.0),
        ShiftSpec("gain_low", gain=0.7),
        ShiftSpec("gain_high", gain=1.3),
        ShiftSpec("pixel_noise", noise_sigma=0.02),
        ShiftSpec("phi+0.02", phi_offset=0.02),
        ShiftSpec("phi-0.02", phi_offset=-0.02),
        ShiftSpec("indent_low", indent_scale=0.8),
        ShiftSpec("indent_high", indent_scale=1.2),
        ShiftSpec("background", background_texture=True),
        ShiftSpec("soft_table", k_table_scale=0.25),
    ]


def evaluate(
    params: dict,
    env_factory,
    n_episodes: int = 200,
    seeds=(0, 1, 2),
    label: str = "base",
) -> EvalReport:
    """Deterministic-action evaluation over freshly sampled scenes.

    env_factory(seed) -> PivotEnv (evaluation mode, no augmentation).
    Success/deviation are aggregated per seed, then averaged across seeds.
    """
    succ_by_seed, dev_by_seed = [], []
    per_family: dict = {}
    for seed in seeds:
        env = env_factory(seed)
        succ, dev, _ = ppo.evaluate_policy(params, env, n_episodes)
        succ_by_seed.append(succ.mean())
        dev_by_seed.append(dev.mean())
    succ_by_seed = np.asarray(succ_by_seed)
    dev_by_seed = np.asarray(dev_by_seed)
    return EvalReport(
        label=label,
        n_episodes=n_episodes * len(seeds),
        mean_deviation=float(dev_by_seed.mean()),
        std_deviation=float(dev_by_seed.std()),
        success_rate=float(succ_by_seed.mean()),
        std_success=float(succ_by_seed.std()),
        per_family=per_family,
    )


def shift_evaluate(
    params: dict,
    shifted_env_factory,
    shifts: list[ShiftSpec],
    n_episodes: int = 200,
    seeds=(0, 1, 2),
) -> list[EvalReport]:
    """Evaluate under each perturbation with the policy's config frozen.

    shifted_env_factory(shift_or_None, seed) -> PivotEnv. The unperturbed
    report is not included; compute it with ``evaluate``.
    """
    reports = []
    for shift in shifts:
        rep = evaluate(
            params,
            lambda seed, s=shift: shifted_env_factory(s, seed),
            n_episodes,
            seeds,
            label=shift.label,
        )
        reports.append(rep)
    return reports


def mean_success_drop(base: EvalReport, shifted: list[EvalReport]) -> float:
    if not shifted:
        return 0.0
    return float(np.mean([base.success_rate - r.success_rate for r in shifted]))


def gridsearch_phi(
    render_cfg: RenderConfig,
    candidates,
    n_frames: int = 200,
    seed: int = 0,
    dyn_cfg: DynamicsConfig | None = None,
) -> float:
    """Pick the threshold maximizing imprint fidelity under this renderer.

    Fidelity is the mean intersection-over-union between the binarized diff
    image and the ground-truth rasterized patch mask over random grasped
    scenes; ties break toward the smaller threshold.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list must be nonempty")
    dyn_cfg = dyn_cfg or DynamicsConfig()
    clean_cfg = replace(
        render_cfg,
        noise_sigma=0.0,
        gain=1.0,
        hue_rotation_deg=0.0,
        indent_scale=1.0,
        background_texture=False,
    )
    env = PivotEnv(seed=seed, render_cfg=render_cfg, dyn_cfg=dyn_cfg)
    rng = np.random.default_rng((seed, 7))
    diffs, masks = [], []
    for _ in range(n_frames):
        env.reset()
        # random press to vary contact force and angle
        for _ in range(int(rng.integers(0, 12))):
            act = Action(*rng.uniform(-1.0, 1.0, size=3))
            env.state, _ = step_dynamics(env.state, act, dyn_cfg)
        patch = contact_patch(env.state, Sensor.LEFT, dyn_cfg)
        height = heightmap_from_patch(patch, render_cfg)
        frame = render_phong(height, render_cfg, Sensor.LEFT, rng=env.noise_rng)
        canon = canonical_image(render_cfg, Sensor.LEFT)
        diffs.append(diff_image(frame, canon))
        # ground-truth mask from the clean geometry, no smoothing influence
        mask_h = heightmap_from_patch(patch, replace(clean_cfg, sigma_gel_px=0.0))
        masks.append((mask_h > 1e-7).astype(np.float32))
    best_phi, best_iou = None, -1.0
    for phi in candidates:
        ious = []
        for d, m in zip(diffs, masks):
            b = binarize(d, phi)[..., 0]
            inter = float(np.minimum(b, m).sum())
            union = float(np.maximum(b, m).sum())
            ious.append(inter / union if union > 0 else 1.0)
        iou = float(np.mean(ious))
        if iou > best_iou + 1e-12 or (
            abs(iou - best_iou) <= 1e-12 and best_phi is not None and phi < best_phi
        ):
            best_phi, best_iou = phi, iou
    return best_phi
