"""Quasi-static planar dynamics for pivoting.

The gripper translates in the xz-plane and rotates about y. The object
hangs from the grasp point at a relative angle to the finger axis; when its
free tip is pressed into the table, the penetration is resolved
kinematically by rotating the object about the grasp point until the tip
sits exactly on the table. Inertia, impacts and grip-force control are out
of scope.

Conventions: the grasp point coincides with (gripper_x, gripper_z); the
object axis direction in the world xz-plane is (sin th, cos th) with
th = gripper_pitch + rel_angle, so rel_angle = 180 deg with zero pitch
hangs the tip straight down.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import ObjectShape, tip_offset


class Sensor(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class DynamicsConfig:
    step_xz: float = 0.005          # m per unit action
    step_pitch: float = math.radians(2.0)
    clearance_min: float = 0.01     # min grasp height above the table, m
    k_table: float = 2000.0         # N/m, penetration -> normal force
    k_f: float = 1e-4               # m/N, force -> extra indentation
    d_grip: float = 0.4e-3          # grip indentation, m
    d_max: float = 1.5e-3           # gel thickness, m
    max_step_rot: float = math.radians(30.0)
    bisect_tol: float = 1e-10       # m, on tip height
    bisect_max_iter: int = 100
    gravity_slip: float = 0.0       # rad/step toward hanging; 0 disables


@dataclass(frozen=True)
class SceneState:
    gripper_x: float
    gripper_z: float
    gripper_pitch: float
    rel_angle: float
    table_contact: bool
    table_normal_force: float
    shape: ObjectShape
    table_height: float
    grasped: bool = True


@dataclass(frozen=True)
class Action:
    dx: float
    dz: float
    dpitch: float

    def clamped(self) -> "Action":
        return Action(
            min(1.0, max(-1.0, self.dx)),
            min(1.0, max(-1.0, self.dz)),
            min(1.0, max(-1.0, self.dpitch)),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dz, self.dpitch], dtype=np.float64)


@dataclass(frozen=True)
class PatchGeometry:
    """Object cross-section within one sensor window.

    ``angle`` is the object-axis angle in the sensor frame (already
    mirrored for the right sensor); ``grasp_s`` the axial coordinate of the
    grasp point, which sits at the window center.
    """

    shape: ObjectShape
    grasp_s: float
    angle: float
    indent: float
    present: bool


def tip_position(state: SceneState) -> tuple[float, float]:
    """World (x, z) of the object's pivoting tip."""
    th = state.gripper_pitch + state.rel_angle
    L = tip_offset(state.shape)
    return (
        state.gripper_x + L * math.sin(th),
        state.gripper_z + L * math.cos(th),
    )


def _tip_z(gz: float, pitch: float, rel: float, L: float) -> float:
    return gz + L * math.cos(pitch + rel)


def step_dynamics(
    state: SceneState, action: Action, cfg: DynamicsConfig
) -> tuple[SceneState, dict]:
    """Advance one quasi-static step; returns (new state, info).

    Info keys: ``blocked`` (penetration unresolvable within the per-step
    rotation cone), ``penetration`` (pre-projection depth, m).
    """
    a = action.clamped()
    L = tip_offset(state.shape)
    gx = state.gripper_x + a.dx * cfg.step_xz
    gz = state.gripper_z + a.dz * cfg.step_xz
    pitch = state.gripper_pitch + a.dpitch * cfg.step_pitch
    gz = max(gz, state.table_height + cfg.clearance_min)
    rel = state.rel_angle

    if cfg.gravity_slip > 0.0 and not state.table_contact:
        # relax toward hanging (th = 180 deg) at a bounded rate
        th = pitch + rel
        err = math.pi - th
        rel = rel + max(-cfg.gravity_slip, min(cfg.gravity_slip, err))

    blocked = False
    pen = state.table_height - _tip_z(gz, pitch, rel, L)
    if pen > 0.0:
        th = pitch + rel
        s = math.sin(th)
        # rotate in the direction that raises the tip; apex ties go positive
        direction = 1.0 if s <= 0.0 else -1.0
        hi = cfg.max_step_rot
        if _tip_z(gz, pitch, rel + direction * hi, L) < state.table_height:
            # cone exhausted: take the full rotation, lift the gripper
            rel = rel + direction * hi
            gz = state.table_height - L * math.cos(pitch + rel)
            blocked = True
        else:
            lo = 0.0
            for _ in range(cfg.bisect_max_iter):
                mid = 0.5 * (lo + hi)
                z = _tip_z(gz, pitch, rel + direction * mid, L)
                if abs(z - state.table_height) <= cfg.bisect_tol:
                    hi = mid
                    break
                if z < state.table_height:
                    lo = mid
                else:
                    hi = mid
            rel = rel + direction * hi
        contact = True
        force = cfg.k_table * pen
    else:
        contact = False
        force = 0.0
        pen = 0.0

    new_state = replace(
        state,
        gripper_x=gx,
        gripper_z=gz,
        gripper_pitch=pitch,
        rel_angle=rel,
        table_contact=contact,
        table_normal_force=force,
    )
    return new_state, {"blocked": blocked, "penetration": pen}


def contact_patch(state: SceneState, sensor: Sensor, cfg: DynamicsConfig) -> PatchGeometry:
    """Cross-section seen by one sensor, with its uniform indentation depth.

    The right sensor views the object mirrored about the vertical axis of
    its window.
    """
    shape = state.shape
    if not state.grasped:
        return PatchGeometry(shape, 0.0, 0.0, 0.0, present=False)
    indent = min(cfg.d_grip + cfg.k_f * state.table_normal_force, cfg.d_max)
    angle = state.rel_angle if sensor is Sensor.LEFT else -state.rel_angle
    return PatchGeometry(
        shape=shape,
        grasp_s=shape.grasp_fraction * shape.length,
        angle=angle,
        indent=indent,
        present=True,
    )
