"""Episodic pivoting environment.

Wraps the quasi-static dynamics with observation assembly (tactile
representations + proprioception + target), the four-term reward, episode
bookkeeping and the deviation-ratio success metric. A thin vectorized
wrapper steps several independent environments in fixed index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import scene as scene_mod
from .baselines import ObsMode
from .dynamics import (
    Action,
    DynamicsConfig,
    SceneState,
    Sensor,
    contact_patch,
    step_dynamics,
    tip_position,
)
from .render import RenderConfig, TactileFrame, canonical_image, heightmap_from_patch, render_phong
from .reprs import ReprConfig, binarize, diff_image, process_frame
from .scene import SceneSpec, tip_offset

HORIZON = 100
CONTACT_MIN_PIXELS = 20
GRIP_LOSS_STEPS = 3
_CONTACT_PHI = 0.05   # internal imprint threshold, independent of ReprConfig.phi


@dataclass(frozen=True)
class RewardConfig:
    r_contact: float = 0.5
    w_position: float = 10.0
    w_angle: float = 10.0
    w_penalty: float = 0.01


@dataclass
class EpisodeContext:
    init_rel_angle: float
    target_rel_angle: float
    init_dist: float
    init_angle_err: float
    target_offset: tuple  # target tip position relative to the gripper
    step_count: int = 0
    horizon: int = HORIZON


@dataclass(frozen=True)
class Observation:
    tactile_left: np.ndarray | None
    tactile_right: np.ndarray | None
    vector: np.ndarray


class EpisodeFinished(RuntimeError):
    """step() called on a finished episode."""


class InfeasibleScene(RuntimeError):
    """No feasible gripper height found for the requested scene."""


def contact_count(left_binary: np.ndarray, right_binary: np.ndarray) -> int:
    """Number of sensors whose imprint has at least CONTACT_MIN_PIXELS on."""
    n = 0
    if float(left_binary.sum()) >= CONTACT_MIN_PIXELS:
        n += 1
    if float(right_binary.sum()) >= CONTACT_MIN_PIXELS:
        n += 1
    return n


def compute_reward(
    state: SceneState,
    ctx: EpisodeContext,
    action: Action,
    cc: int,
    cfg: RewardConfig,
) -> float:
    """Contact + gated position/angle progress - action penalty.

    The position term compares the tip's offset from the gripper against the
    target offset recorded at reset, so it is invariant to gripper translation
    and monotone in actual pivoting progress.
    """
    r = cc * cfg.r_contact
    gate = 1.0 if cc >= 1 else 0.0
    if gate:
        if ctx.init_dist > 1e-9:
            tx, tz = tip_position(state)
            cur_dist = math.hypot(
                tx - state.gripper_x - ctx.target_offset[0],
                tz - state.gripper_z - ctx.target_offset[1],
            )
            r += cfg.w_position * (1.0 - cur_dist / ctx.init_dist)
        if ctx.init_angle_err > 1e-9:
            cur_err = abs(state.rel_angle - ctx.target_rel_angle)
            r += cfg.w_angle * (1.0 - cur_err / ctx.init_angle_err)
    a = action.as_array()
    r -= cfg.w_penalty * float(a @ a)
    return r


def deviation_ratio(state: SceneState, ctx: EpisodeContext) -> float:
    """|achieved rotation - target rotation| / target rotation."""
    rotated = abs(state.rel_angle - ctx.init_rel_angle)
    target_rotated = abs(ctx.target_rel_angle - ctx.init_rel_angle)
    if target_rotated <= 0.0:
        return 0.0
    return abs(rotated - target_rotated) / target_rotated


def success(state: SceneState, ctx: EpisodeContext) -> bool:
    return deviation_ratio(state, ctx) < 0.15


class PivotEnv:
    """One pivoting episode stream; owns its rng and auto-samples scenes."""

    def __init__(
        self,
        seed: int = 0,
        obs_mode: ObsMode = ObsMode.TACTILE,
        repr_cfg: ReprConfig | None = None,
        dyn_cfg: DynamicsConfig | None = None,
        render_cfg: RenderConfig | None = None,
        reward_cfg: RewardConfig | None = None,
        families=scene_mod.ALL_FAMILIES,
        ranges: scene_mod.TaskRanges = scene_mod.DEFAULT_RANGES,
        training: bool = False,
        horizon: int = HORIZON,
    ):
        self.obs_mode = obs_mode
        self.repr_cfg = repr_cfg or ReprConfig()
        self.dyn_cfg = dyn_cfg or DynamicsConfig()
        self.render_cfg = render_cfg or RenderConfig()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.families = tuple(families)
        self.ranges = ranges
        self.training = training
        self.horizon = horizon
        self.scene_rng = np.random.default_rng(seed)
        self.aug_rng = np.random.default_rng((seed, 1))
        self.noise_rng = np.random.default_rng((seed, 2))
        self.state: SceneState | None = None
        self.ctx: EpisodeContext | None = None
        self.done = True
        self._zero_contact_streak = 0

    # -- episode setup ---------------------------------------------------

    def reset(self, spec: SceneSpec | None = None) -> Observation:
        if spec is None:
            spec = scene_mod.sample_scene(self.scene_rng, self.families, self.ranges)
        rng = np.random.default_rng(spec.seed)
        L = tip_offset(spec.object)
        table = spec.table_height
        for _ in range(100):
            gap = rng.uniform(0.01, 0.03)
            gz = table + gap - L * math.cos(spec.init_rel_angle)
            target_tip_z = gz + L * math.cos(spec.target_rel_angle)
            if target_tip_z >= table and gz >= table + self.dyn_cfg.clearance_min:
                break
        else:
            raise InfeasibleScene(f"no feasible gripper height for {spec}")
        state = SceneState(
            gripper_x=0.0,
            gripper_z=gz,
            gripper_pitch=0.0,
            rel_angle=spec.init_rel_angle,
            table_contact=False,
            table_normal_force=0.0,
            shape=spec.object,
            table_height=table,
        )
        tip0 = tip_position(state)
        # target tip offset from the gripper at the initial pitch (= chord geometry)
        theta_t = state.gripper_pitch + spec.target_rel_angle
        target_offset = (L * math.sin(theta_t), L * math.cos(theta_t))
        init_dist = math.hypot(
            tip0[0] - state.gripper_x - target_offset[0],
            tip0[1] - state.gripper_z - target_offset[1],
        )
        self.state = state
        self.ctx = EpisodeContext(
            init_rel_angle=spec.init_rel_angle,
            target_rel_angle=spec.target_rel_angle,
            init_dist=init_dist,
            init_angle_err=abs(spec.init_rel_angle - spec.target_rel_angle),
            target_offset=target_offset,
            horizon=self.horizon,
        )
        self._start_pose = (state.gripper_x, state.gripper_z, state.gripper_pitch)
        self.done = False
        self._zero_contact_streak = 0
        return self._observe()

    def set_grasped(self, grasped: bool) -> None:
        """Test hook: simulate losing or regaining the grip."""
        assert self.state is not None
        self.state = replace(self.state, grasped=grasped)

    # -- stepping --------------------------------------------------------

    def step(self, action) -> tuple[Observation, float, bool, dict]:
        if self.done or self.state is None:
            raise EpisodeFinished("reset() must be called before step()")
        if not isinstance(action, Action):
            action = Action(*np.asarray(action, dtype=np.float64))
        self.state, info = step_dynamics(self.state, action, self.dyn_cfg)
        frames = self._render_frames()
        cc = self._contact_count(frames)
        reward = compute_reward(self.state, self.ctx, action, cc, self.reward_cfg)
        self.ctx.step_count += 1
        self._zero_contact_streak = 0 if cc > 0 else self._zero_contact_streak + 1
        grip_lost = self._zero_contact_streak >= GRIP_LOSS_STEPS
        self.done = self.ctx.step_count >= self.ctx.horizon or grip_lost
        obs = self._observe(frames)
        info.update(
            contact_count=cc,
            deviation=deviation_ratio(self.state, self.ctx),
            grip_lost=grip_lost,
        )
        if self.done:
            info["success"] = success(self.state, self.ctx) and not grip_lost
        return obs, reward, self.done, info

    # -- internals -------------------------------------------------------

    def _render_frames(self) -> dict:
        frames = {}
        for sensor in (Sensor.LEFT, Sensor.RIGHT):
            patch = contact_patch(self.state, sensor, self.dyn_cfg)
            height = heightmap_from_patch(patch, self.render_cfg)
            frames[sensor] = render_phong(
                height, self.render_cfg, sensor, rng=self.noise_rng
            )
        return frames

    def _contact_count(self, frames: dict) -> int:
        maps = {}
        for sensor, frame in frames.items():
            canon = canonical_image(self.render_cfg, sensor)
            maps[sensor] = binarize(diff_image(frame, canon), _CONTACT_PHI)
        return contact_count(maps[Sensor.LEFT], maps[Sensor.RIGHT])

    def _observe(self, frames: dict | None = None) -> Observation:
        state, ctx = self.state, self.ctx
        dx = state.gripper_x - self._start_pose[0]
        dz = state.gripper_z - self._start_pose[1]
        dpitch = state.gripper_pitch - self._start_pose[2]
        proprio = [
            state.gripper_x,
            state.gripper_z,
            state.gripper_pitch,
            dx,
            dz,
            dpitch,
            ctx.step_count / ctx.horizon,
        ]
        vec = proprio + [ctx.target_rel_angle]
        if self.obs_mode is ObsMode.ORACLE_ANGLE:
            vec.append(state.rel_angle)
        vector = np.asarray(vec, dtype=np.float32)
        if self.obs_mode is not ObsMode.TACTILE:
            return Observation(None, None, vector)
        if frames is None:
            frames = self._render_frames()
        left = process_frame(
            frames[Sensor.LEFT],
            canonical_image(self.render_cfg, Sensor.LEFT),
            self.repr_cfg,
            rng=self.aug_rng,
            training=self.training,
        )
        right = process_frame(
            frames[Sensor.RIGHT],
            canonical_image(self.render_cfg, Sensor.RIGHT),
            self.repr_cfg,
            rng=self.aug_rng,
            training=self.training,
        )
        return Observation(left, right, vector)


class VecEnv:
    """Fixed-order batch of independent PivotEnvs with auto-reset."""

    def __init__(self, envs: list[PivotEnv]):
        self.envs = envs

    def __len__(self):
        return len(self.envs)

    def reset(self) -> list[Observation]:
        return [env.reset() for env in self.envs]

    def step(self, actions) -> tuple[list[Observation], np.ndarray, np.ndarray, list[dict]]:
        obs, rewards, dones, infos = [], [], [], []
        for env, act in zip(self.envs, actions):
            o, r, d, inf = env.step(act)
            if d:
                o = env.reset()
            obs.append(o)
            rewards.append(r)
            dones.append(d)
            infos.append(inf)
        return obs, np.asarray(rewards), np.asarray(dones), infos


def obs_vector_size(obs_mode: ObsMode) -> int:
    return 9 if obs_mode is ObsMode.ORACLE_ANGLE else 8
