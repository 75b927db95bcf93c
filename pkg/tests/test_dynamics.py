import math
from dataclasses import replace

import numpy as np
import pytest

from tactile_pivot.dynamics import (
    Action,
    DynamicsConfig,
    SceneState,
    Sensor,
    contact_patch,
    step_dynamics,
    tip_position,
)
from tactile_pivot.scene import Family, ObjectShape, make_object, sample_scene, tip_offset

CFG = DynamicsConfig()


def rod(length=0.15, width=0.016, grasp_fraction=0.2):
    return ObjectShape(Family.ROD, length, width, grasp_fraction, ())


def make_state(gx=0.0, gz=0.3, pitch=0.0, rel=math.pi, table=0.0, shape=None, **kw):
    return SceneState(
        gripper_x=gx,
        gripper_z=gz,
        gripper_pitch=pitch,
        rel_angle=rel,
        table_contact=False,
        table_normal_force=0.0,
        shape=shape or rod(),
        table_height=table,
        **kw,
    )


# -- tip kinematics ------------------------------------------------------


def test_tip_straight_down():
    st = make_state(rel=math.pi)
    L = tip_offset(st.shape)
    tx, tz = tip_position(st)
    assert tx == pytest.approx(0.0, abs=1e-12)
    assert tz == pytest.approx(st.gripper_z - L, abs=1e-12)


def test_tip_horizontal_quarter_turn():
    st = make_state(rel=math.pi / 2.0)
    L = tip_offset(st.shape)
    tx, tz = tip_position(st)
    assert tx == pytest.approx(L, abs=1e-12)
    assert tz == pytest.approx(st.gripper_z, abs=1e-12)


def test_tip_rotation_oracle():
    # gripper (0.1, 0.3) pitched 10 deg, rel 170 deg, lever 0.12 m
    shape = rod(length=0.15, grasp_fraction=0.2)  # tip_offset 0.12
    st = make_state(gx=0.1, gz=0.3, pitch=math.radians(10.0), rel=math.radians(170.0), shape=shape)
    th = math.radians(180.0)
    tx, tz = tip_position(st)
    assert tx == pytest.approx(0.1 + 0.12 * math.sin(th), abs=1e-12)
    assert tz == pytest.approx(0.3 + 0.12 * math.cos(th), abs=1e-12)


# -- stepping ------------------------------------------------------------


def test_identity_action_no_contact():
    st = make_state(gz=0.5)
    new, info = step_dynamics(st, Action(0, 0, 0), CFG)
    assert new == st
    assert not info["blocked"]
    assert info["penetration"] == 0.0


def test_press_down_resolves_to_table():
    shape = rod()
    L = tip_offset(shape)
    st = make_state(gz=L + 0.001, rel=math.pi, shape=shape)  # tip 1 mm above table
    new, info = step_dynamics(st, Action(0, -1, 0), CFG)
    assert new.table_contact
    tz = tip_position(new)[1]
    assert abs(tz - new.table_height) <= 1e-9
    assert new.rel_angle != pytest.approx(math.pi)
    assert new.table_normal_force == pytest.approx(CFG.k_table * 0.004)


def _sweep_oracle(gz, pitch, rel, L, table, direction, n=4_000_001):
    """Dense-sweep reference for the bisection: smallest rotation that puts
    the tip back on the table surface."""
    deltas = np.linspace(0.0, CFG.max_step_rot, n)
    z = gz + L * np.cos(pitch + rel + direction * deltas)
    ok = z >= table
    idx = int(np.argmax(ok))
    assert ok[idx]
    return direction * deltas[idx]


def test_bisection_matches_sweep_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape = make_object(Family.ROD, rng)
        L = tip_offset(shape)
        rel = rng.uniform(math.radians(150.0), math.radians(210.0))
        pitch = rng.uniform(-0.1, 0.1)
        table = rng.uniform(0.0, 0.1)
        # place the tip a little above the table, then push down into it
        gz = table + rng.uniform(0.001, 0.004) - L * math.cos(pitch + rel)
        st = make_state(gz=gz, pitch=pitch, rel=rel, table=table, shape=shape)
        new, info = step_dynamics(st, Action(0, -1, 0), CFG)
        if not new.table_contact:
            continue
        s = math.sin(pitch + rel)
        direction = 1.0 if s <= 0.0 else -1.0
        gz_after = st.gripper_z - CFG.step_xz
        expected = rel + _sweep_oracle(gz_after, pitch, rel, L, table, direction)
        assert new.rel_angle == pytest.approx(expected, abs=2e-6)
        assert abs(tip_position(new)[1] - table) <= 1e-9


def test_monotone_rotation_under_sustained_press():
    shape = rod()
    L = tip_offset(shape)
    st = make_state(gz=L + 0.001, rel=math.radians(185.0), shape=shape)
    rels = [st.rel_angle]
    for _ in range(15):
        st, _ = step_dynamics(st, Action(0, -1, 0), CFG)
        rels.append(st.rel_angle)
    deltas = np.diff(rels)
    moving = deltas[np.abs(deltas) > 1e-12]
    assert moving.size > 3
    assert np.all(moving > 0) or np.all(moving < 0)


def test_blocked_when_cone_exhausted():
    shape = rod()
    L = tip_offset(shape)
    # gripper so low that no +-30 deg rotation can raise the tip above the table
    st = make_state(gz=0.02, rel=math.pi, shape=shape, table=0.0)
    new, info = step_dynamics(st, Action(0, -1, 0), CFG)
    assert info["blocked"]
    assert abs(tip_position(new)[1] - new.table_height) <= 1e-9
    assert new.gripper_z > st.gripper_z - CFG.step_xz  # raised to feasibility


def test_step_determinism_bit_exact():
    st = make_state(gz=0.121, rel=math.radians(182.0))
    a = Action(0.3, -0.9, 0.1)
    n1, i1 = step_dynamics(st, a, CFG)
    n2, i2 = step_dynamics(st, a, CFG)
    assert n1 == n2
    assert i1 == i2


def test_force_sign_invariant():
    rng = np.random.default_rng(3)
    spec = sample_scene(rng)
    L = tip_offset(spec.object)
    st = make_state(
        gz=spec.table_height + 0.02 - L * math.cos(spec.init_rel_angle),
        rel=spec.init_rel_angle,
        table=spec.table_height,
        shape=spec.object,
    )
    for _ in range(300):
        a = Action(*rng.uniform(-1, 1, size=3))
        st, _ = step_dynamics(st, a, CFG)
        assert (st.table_normal_force > 0) == st.table_contact
        assert st.table_normal_force >= 0.0


def test_tip_above_table_and_continuity_fuzz():
    rng = np.random.default_rng(11)
    for _ in range(10):
        spec = sample_scene(rng)
        L = tip_offset(spec.object)
        gz = spec.table_height + rng.uniform(0.01, 0.03) - L * math.cos(spec.init_rel_angle)
        st = make_state(
            gz=gz, rel=spec.init_rel_angle, table=spec.table_height, shape=spec.object
        )
        prev_rel = st.rel_angle
        for _ in range(200):
            st, _ = step_dynamics(st, Action(*rng.uniform(-1, 1, size=3)), CFG)
            assert tip_position(st)[1] >= st.table_height - 1e-9
            assert abs(st.rel_angle - prev_rel) <= CFG.max_step_rot + 1e-12
            prev_rel = st.rel_angle


def _mirror_state(st: SceneState) -> SceneState:
    return replace(
        st,
        gripper_x=-st.gripper_x,
        gripper_pitch=-st.gripper_pitch,
        rel_angle=-st.rel_angle,
    )


def test_mirror_symmetry():
    rng = np.random.default_rng(5)
    for _ in range(10):
        spec = sample_scene(rng)
        L = tip_offset(spec.object)
        gz = spec.table_height + rng.uniform(0.005, 0.02) - L * math.cos(spec.init_rel_angle)
        st = make_state(
            gx=rng.uniform(-0.05, 0.05),
            gz=gz,
            pitch=rng.uniform(-0.1, 0.1),
            rel=spec.init_rel_angle,
            table=spec.table_height,
            shape=spec.object,
        )
        mt = _mirror_state(st)
        for _ in range(50):
            a = Action(*rng.uniform(-1, 1, size=3))
            am = Action(-a.dx, a.dz, -a.dpitch)
            st, info = step_dynamics(st, a, CFG)
            mt, minfo = step_dynamics(mt, am, CFG)
            assert mt.gripper_x == pytest.approx(-st.gripper_x, abs=1e-12)
            assert mt.gripper_z == pytest.approx(st.gripper_z, abs=1e-12)
            assert mt.gripper_pitch == pytest.approx(-st.gripper_pitch, abs=1e-12)
            assert mt.rel_angle == pytest.approx(-st.rel_angle, abs=1e-12)
            assert mt.table_normal_force == pytest.approx(st.table_normal_force, abs=1e-12)
            assert minfo["blocked"] == info["blocked"]


# -- contact patches -----------------------------------------------------


def test_patch_indent_zero_force():
    st = make_state()
    patch = contact_patch(st, Sensor.LEFT, CFG)
    assert patch.present
    assert patch.indent == pytest.approx(CFG.d_grip)


def test_patch_indent_linear_map():
    st = replace(make_state(), table_normal_force=2.0, table_contact=True)
    patch = contact_patch(st, Sensor.LEFT, CFG)
    assert patch.indent == pytest.approx(0.6e-3)  # 0.4 mm + 1e-4 * 2 N


def test_patch_indent_clamped_at_gel_thickness():
    st = replace(make_state(), table_normal_force=500.0, table_contact=True)
    patch = contact_patch(st, Sensor.LEFT, CFG)
    assert patch.indent == pytest.approx(CFG.d_max)


def test_right_sensor_mirrors_angle():
    st = make_state(rel=math.radians(170.0))
    left = contact_patch(st, Sensor.LEFT, CFG)
    right = contact_patch(st, Sensor.RIGHT, CFG)
    assert left.angle == pytest.approx(st.rel_angle)
    assert right.angle == pytest.approx(-st.rel_angle)
    assert left.grasp_s == right.grasp_s


def test_ungrasped_patch_absent():
    st = replace(make_state(), grasped=False)
    patch = contact_patch(st, Sensor.LEFT, CFG)
    assert not patch.present


def test_action_clamping():
    a = Action(5.0, -3.0, 0.5).clamped()
    assert (a.dx, a.dz, a.dpitch) == (1.0, -1.0, 0.5)
