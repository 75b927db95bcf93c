import math

import pytest

from tactile_pivot.baselines import ObsMode
from tactile_pivot.config import load_config, make_env_factory
from tactile_pivot.reprs import ReprMode
from tactile_pivot.scene import ConfigError, Family


def test_defaults_load_and_convert_units():
    cfg = load_config()
    assert cfg.dyn.step_xz == pytest.approx(0.005)
    assert cfg.dyn.step_pitch == pytest.approx(math.radians(2.0))
    assert cfg.dyn.d_grip == pytest.approx(0.4e-3)
    assert cfg.render.window_x == pytest.approx(0.020)
    assert cfg.render.d_max == cfg.dyn.d_max
    assert cfg.ranges.init_angle == pytest.approx(
        (math.radians(165.0), math.radians(195.0))
    )
    assert cfg.repr.mode is ReprMode.BINARY
    assert cfg.obs_mode is ObsMode.TACTILE
    assert cfg.ppo.lr == pytest.approx(3e-4)
    assert cfg.eval_seeds == (0, 1, 2)
    assert cfg.horizon == 100


def test_digest_stable_and_sensitive():
    a = load_config()
    b = load_config()
    assert a.digest == b.digest
    c = load_config(overrides={"train.lr": "1e-4"})
    assert c.digest != a.digest
    d = load_config(overrides={"train.lr": "3e-4"})
    assert d.digest == a.digest  # same canonical value, same digest


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides={"train.learning_rate": "1"})
    with pytest.raises(ConfigError):
        load_config(overrides={"nosection.lr": "1"})
    with pytest.raises(ConfigError):
        load_config(overrides={"badform": "1"})


def test_file_parsing(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[train]\nobs = oracle\ntotal_steps = 2e5\n[repr]\nmode = rgb\n")
    cfg = load_config(str(p))
    assert cfg.obs_mode is ObsMode.ORACLE_ANGLE
    assert cfg.ppo.total_steps == 200_000
    assert cfg.repr.mode is ReprMode.RGB


def test_file_unknown_section_and_missing_file(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_family_subset_and_unknown_family():
    cfg = load_config(overrides={"task.families": "rod, wedge"})
    assert cfg.families == (Family.ROD, Family.WEDGE)
    with pytest.raises(ConfigError):
        load_config(overrides={"task.families": "rod,cube"})


def test_range_limits_enforced():
    with pytest.raises(ConfigError):
        load_config(overrides={"task.target_deg_range": "60,150"})
    cfg = load_config(
        overrides={"task.target_deg_range": "60,150"}, allow_out_of_range=True
    )
    assert cfg.ranges.target_angle[0] == pytest.approx(math.radians(60.0))


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides={"render.background_texture": "maybe"})
    with pytest.raises(ConfigError):
        load_config(overrides={"repr.mode": "sparse"})
    with pytest.raises(ConfigError):
        load_config(overrides={"train.obs": "vision"})
    with pytest.raises(ConfigError):
        load_config(overrides={"task.length_cm_range": "18,13"})


def test_make_env_factory_applies_config_and_shift():
    from tactile_pivot.evalsuite import ShiftSpec

    cfg = load_config(overrides={"task.horizon": "7", "train.obs": "proprio"})
    env = make_env_factory(cfg)(seed=1, training=True)
    assert env.horizon == 7
    assert env.obs_mode is ObsMode.PROPRIO_ONLY
    assert env.training

    shifted = make_env_factory(cfg, ShiftSpec("g", gain=0.5))(seed=1)
    assert shifted.render_cfg.gain == pytest.approx(0.5)
    assert not shifted.training
