"""Run configuration: INI-style files with unit suffixes at the boundary.

Keys carrying ``_cm``, ``_mm`` or ``_deg`` suffixes are converted to SI
units (meters, radians) at load time; everything internal is SI. Unknown
keys and out-of-range values are rejected. A stable 64-bit digest of the
canonicalized key-value map identifies a configuration.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace

from .baselines import ObsMode
from .dynamics import DynamicsConfig
from .ppo import PpoConfig
from .render import RenderConfig
from .reprs import ReprConfig, ReprMode
from .scene import ALL_FAMILIES, ConfigError, Family, TaskRanges

# canonical key set: {section: {key: default-string}}
DEFAULTS = {
    "task": {
        "families": "rod,wedge,tbar,bottle,hammer",
        "length_cm_range": "13,18",
        "table_height_cm_range": "0,20",
        "init_deg_range": "165,195",
        "target_deg_range": "90,150",
        "horizon": "100",
    },
    "dynamics": {
        "step_xz_cm": "0.5",
        "step_pitch_deg": "2",
        "clearance_min_cm": "1",
        "k_table": "2000",
        "k_f": "1e-4",
        "d_grip_mm": "0.4",
        "d_max_mm": "1.5",
        "max_step_rot_deg": "30",
        "gravity_slip": "0",
    },
    "render": {
        "window_x_cm": "2.0",
        "window_y_cm": "2.5",
        "sigma_gel_px": "2.0",
        "slope_gain": "8.0",
        "proximity_gain": "0.4",
        "k_ambient": "0.6",
        "k_diffuse": "0.5",
        "k_specular": "0.3",
        "shininess": "16",
        "light_elevation_deg": "70",
        "light_intensity": "0.3333333333333333",
        "gain": "1.0",
        "noise_sigma": "0.0",
        "hue_rotation_deg": "0.0",
        "indent_scale": "1.0",
        "background_texture": "false",
    },
    "repr": {
        "mode": "binary",
        "phi": "0.05",
        "augment": "false",
        "scale_low": "0.2",
        "scale_high": "1.0",
        "erase_prob": "0.5",
        "erase_max_frac": "0.2",
        "jitter_brightness": "0.2",
        "jitter_contrast_low": "0.8",
        "jitter_contrast_high": "1.2",
        "jitter_hue_deg": "15",
    },
    "train": {
        "lr": "3e-4",
        "n_envs": "8",
        "n_steps": "256",
        "minibatch": "64",
        "epochs": "10",
        "gamma": "0.99",
        "gae_lambda": "0.95",
        "clip": "0.2",
        "vf_coef": "0.5",
        "ent_coef": "0.0",
        "max_grad_norm": "0.5",
        "reward_scale": "0.01",
        "target_kl": "0.02",
        "total_steps": "200000",
        "seed": "0",
        "eval_interval": "20480",
        "eval_episodes": "50",
        "obs": "tactile",
    },
    "eval": {
        "n_episodes": "200",
        "seeds": "0,1,2",
    },
}

# keys whose values must stay inside the published randomization ranges
RANGE_LIMITS = {
    ("task", "length_cm_range"): (13.0, 18.0),
    ("task", "table_height_cm_range"): (0.0, 20.0),
    ("task", "init_deg_range"): (165.0, 195.0),
    ("task", "target_deg_range"): (90.0, 150.0),
}


def _parse_pair(value: str) -> tuple[float, float]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'low,high', got {value!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if lo > hi:
        raise ConfigError(f"range low > high in {value!r}")
    return lo, hi


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class RunConfig:
    raw: dict                    # {section: {key: string value}}
    families: tuple
    ranges: TaskRanges
    horizon: int
    dyn: DynamicsConfig
    render: RenderConfig
    repr: ReprConfig
    ppo: PpoConfig
    obs_mode: ObsMode
    eval_episodes: int
    eval_seeds: tuple

    @property
    def digest(self) -> int:
        h = hashlib.blake2b(digest_size=8)
        for section in sorted(self.raw):
            for key in sorted(self.raw[section]):
                h.update(f"{section}.{key}={self.raw[section][key]}\n".encode())
        return int.from_bytes(h.digest(), "little")


def load_config(
    path: str | None = None, overrides: dict | None = None, allow_out_of_range: bool = False
) -> RunConfig:
    """Parse defaults, then the file, then overrides; validate everything.

    ``overrides`` maps "section.key" -> string value (CLI --set form).
    """
    raw = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
        for section in parser.sections():
            if section not in raw:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in raw[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                raw[section][key] = value
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override must be section.key=value, got {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in raw or key not in raw[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        raw[section][key] = str(value)

    if not allow_out_of_range:
        for (section, key), (lo, hi) in RANGE_LIMITS.items():
            a, b = _parse_pair(raw[section][key])
            if a < lo - 1e-9 or b > hi + 1e-9:
                raise ConfigError(
                    f"{section}.{key}={raw[section][key]} outside [{lo}, {hi}] "
                    "(use --allow-out-of-range to permit)"
                )

    t = raw["task"]
    fam_by_name = {f.value: f for f in ALL_FAMILIES}
    families = []
    for name in t["families"].split(","):
        name = name.strip().lower()
        if name not in fam_by_name:
            raise ConfigError(f"unknown object family {name!r}")
        families.append(fam_by_name[name])
    lr = _parse_pair(t["length_cm_range"])
    th = _parse_pair(t["table_height_cm_range"])
    ia = _parse_pair(t["init_deg_range"])
    ta = _parse_pair(t["target_deg_range"])
    ranges = TaskRanges(
        length=(lr[0] / 100.0, lr[1] / 100.0),
        table_height=(th[0] / 100.0, th[1] / 100.0),
        init_angle=(math.radians(ia[0]), math.radians(ia[1])),
        target_angle=(math.radians(ta[0]), math.radians(ta[1])),
    )

    d = raw["dynamics"]
    dyn = DynamicsConfig(
        step_xz=float(d["step_xz_cm"]) / 100.0,
        step_pitch=math.radians(float(d["step_pitch_deg"])),
        clearance_min=float(d["clearance_min_cm"]) / 100.0,
        k_table=float(d["k_table"]),
        k_f=float(d["k_f"]),
        d_grip=float(d["d_grip_mm"]) / 1000.0,
        d_max=float(d["d_max_mm"]) / 1000.0,
        max_step_rot=math.radians(float(d["max_step_rot_deg"])),
        gravity_slip=float(d["gravity_slip"]),
    )

    r = raw["render"]
    render = RenderConfig(
        window_x=float(r["window_x_cm"]) / 100.0,
        window_y=float(r["window_y_cm"]) / 100.0,
        sigma_gel_px=float(r["sigma_gel_px"]),
        d_max=dyn.d_max,
        slope_gain=float(r["slope_gain"]),
        proximity_gain=float(r["proximity_gain"]),
        k_ambient=float(r["k_ambient"]),
        k_diffuse=float(r["k_diffuse"]),
        k_specular=float(r["k_specular"]),
        shininess=float(r["shininess"]),
        light_elevation_deg=float(r["light_elevation_deg"]),
        light_intensity=float(r["light_intensity"]),
        gain=float(r["gain"]),
        noise_sigma=float(r["noise_sigma"]),
        hue_rotation_deg=float(r["hue_rotation_deg"]),
        indent_scale=float(r["indent_scale"]),
        background_texture=_parse_bool(r["background_texture"]),
    )

    p = raw["repr"]
    mode = {m.value: m for m in ReprMode}.get(p["mode"].strip().lower())
    if mode is None:
        raise ConfigError(f"unknown repr mode {p['mode']!r}")
    repr_cfg = ReprConfig(
        mode=mode,
        phi=float(p["phi"]),
        augment=_parse_bool(p["augment"]),
        scale_range=(float(p["scale_low"]), float(p["scale_high"])),
        erase_prob=float(p["erase_prob"]),
        erase_max_frac=float(p["erase_max_frac"]),
        jitter_brightness=float(p["jitter_brightness"]),
        jitter_contrast=(float(p["jitter_contrast_low"]), float(p["jitter_contrast_high"])),
        jitter_hue_deg=float(p["jitter_hue_deg"]),
    )

    tr = raw["train"]
    obs_mode = {m.value: m for m in ObsMode}.get(tr["obs"].strip().lower())
    if obs_mode is None:
        raise ConfigError(f"unknown obs mode {tr['obs']!r}")
    ppo_cfg = PpoConfig(
        lr=float(tr["lr"]),
        n_envs=int(tr["n_envs"]),
        n_steps=int(tr["n_steps"]),
        minibatch=int(tr["minibatch"]),
        epochs=int(tr["epochs"]),
        gamma=float(tr["gamma"]),
        gae_lambda=float(tr["gae_lambda"]),
        clip=float(tr["clip"]),
        vf_coef=float(tr["vf_coef"]),
        ent_coef=float(tr["ent_coef"]),
        max_grad_norm=float(tr["max_grad_norm"]),
        reward_scale=float(tr["reward_scale"]),
        target_kl=float(tr["target_kl"]),
        total_steps=int(float(tr["total_steps"])),
        seed=int(tr["seed"]),
        eval_interval=int(float(tr["eval_interval"])),
        eval_episodes=int(tr["eval_episodes"]),
    )

    e = raw["eval"]
    eval_seeds = tuple(int(s) for s in e["seeds"].split(","))

    return RunConfig(
        raw=raw,
        families=tuple(families),
        ranges=ranges,
        horizon=int(t["horizon"]),
        dyn=dyn,
        render=render,
        repr=repr_cfg,
        ppo=ppo_cfg,
        obs_mode=obs_mode,
        eval_episodes=int(e["n_episodes"]),
        eval_seeds=eval_seeds,
    )


def make_env_factory(cfg: RunConfig, shift=None):
    """Builds env_factory(seed, training) for training/eval under cfg."""
    from .env import PivotEnv  # local import to avoid a cycle

    render_cfg, dyn_cfg, repr_cfg = cfg.render, cfg.dyn, cfg.repr
    if shift is not None:
        render_cfg, dyn_cfg, repr_cfg = shift.apply(render_cfg, dyn_cfg, repr_cfg)

    def factory(seed: int, training: bool = False) -> PivotEnv:
        return PivotEnv(
            seed=seed,
            obs_mode=cfg.obs_mode,
            repr_cfg=repr_cfg,
            dyn_cfg=dyn_cfg,
            render_cfg=render_cfg,
            families=cfg.families,
            ranges=cfg.ranges,
            training=training,
            horizon=cfg.horizon,
        )

    return factory
