import numpy as np
import pytest

from tactile_pivot import net
from tactile_pivot.net import (
    ACTION_DIM,
    CONV_SIZES,
    CONV_SPEC,
    FLAT_SIZE,
    LOGSTD_MAX,
    LOGSTD_MIN,
    UsageError,
    backward,
    conv_out_size,
    forward,
    grad_check,
    init_params,
    param_channels,
)


def rand_inputs(rng, channels=1, batch=3, vec_dim=8):
    imgs = (
        rng.uniform(0, 1, size=(batch, 2, channels, 64, 64)).astype(np.float32)
        if channels
        else None
    )
    vec = rng.uniform(-1, 1, size=(batch, vec_dim)).astype(np.float32)
    return imgs, vec


# -- architecture bookkeeping --------------------------------------------


def test_conv_size_chain():
    assert conv_out_size(64, 8, 4) == 15
    assert conv_out_size(15, 4, 2) == 6
    assert conv_out_size(6, 3, 1) == 4
    assert CONV_SIZES == [15, 6, 4]
    assert FLAT_SIZE == 32 * 4 * 4


def test_init_determinism_and_channels():
    a = init_params(np.random.default_rng(0), 1, 8)
    b = init_params(np.random.default_rng(0), 1, 8)
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert param_channels(a) == 1
    assert param_channels(init_params(np.random.default_rng(0), 3, 8)) == 3
    p0 = init_params(np.random.default_rng(0), 0, 8)
    assert param_channels(p0) == 0
    assert "conv1_w" not in p0 and "enc_w" not in p0
    with pytest.raises(ValueError):
        init_params(np.random.default_rng(0), 2, 8)


def test_orthogonal_init_gains():
    p = init_params(np.random.default_rng(1), 1, 8, dtype=np.float64)
    # trunk is 256 x 320 (rows < cols): rows are orthogonal up to the gain
    w = p["trunk_w"]
    gram = w @ w.T
    assert np.allclose(gram, 2.0 * np.eye(w.shape[0]), atol=1e-9)
    # proprio is 64 x 8 (rows > cols): columns are orthogonal
    pw = p["proprio_w"]
    assert np.allclose(pw.T @ pw, 2.0 * np.eye(pw.shape[1]), atol=1e-9)
    am = p["actor_mean_w"]  # rows < cols: rows orthogonal, tiny gain
    assert np.allclose(am @ am.T, 0.01**2 * np.eye(ACTION_DIM), atol=1e-12)
    cw = p["critic_w"]
    assert float((cw @ cw.T)[0, 0]) == pytest.approx(1.0, abs=1e-9)
    assert not p["proprio_b"].any() and not p["trunk_b"].any()
    assert not p["actor_logstd"].any()


# -- forward -------------------------------------------------------------


def test_zero_input_propagates_to_zero_heads():
    p = init_params(np.random.default_rng(2), 1, 8)
    imgs = np.zeros((2, 2, 1, 64, 64), dtype=np.float32)
    vec = np.zeros((2, 8), dtype=np.float32)
    out = forward(p, imgs, vec)
    assert np.allclose(out.action_mean, 0.0, atol=1e-7)
    assert np.allclose(out.value, 0.0, atol=1e-7)
    assert np.array_equal(out.action_logstd, np.zeros(ACTION_DIM, dtype=np.float32))


def test_forward_requires_images_for_conv_params():
    p = init_params(np.random.default_rng(3), 1, 8)
    with pytest.raises(UsageError):
        forward(p, None, np.zeros((1, 8), dtype=np.float32))


def test_batching_consistency():
    rng = np.random.default_rng(4)
    p = init_params(rng, 1, 8)
    imgs, vec = rand_inputs(rng, batch=5)
    full = forward(p, imgs, vec)
    for i in range(5):
        one = forward(p, imgs[i : i + 1], vec[i : i + 1])
        assert np.allclose(one.action_mean[0], full.action_mean[i], atol=1e-6)
        assert np.allclose(one.value[0], full.value[i], atol=1e-5)


def test_right_sensor_affects_output():
    rng = np.random.default_rng(5)
    p = init_params(rng, 1, 8)
    imgs, vec = rand_inputs(rng)
    base = forward(p, imgs, vec)
    mod = imgs.copy()
    mod[:, 1] = 1.0 - mod[:, 1]
    changed = forward(p, mod, vec)
    assert not np.allclose(base.action_mean, changed.action_mean)
    assert not np.allclose(base.value, changed.value)


def test_sensors_share_encoder():
    # swapping the two sensor images swaps the two encoder feature halves
    rng = np.random.default_rng(6)
    p = init_params(rng, 1, 8)
    imgs, vec = rand_inputs(rng, batch=2)
    a = forward(p, imgs, vec)
    b = forward(p, imgs[:, ::-1].copy(), vec)
    n = vec.shape[0]
    enc_a = a.cache["enc"].reshape(n, 2, net.ENC_FC)
    enc_b = b.cache["enc"].reshape(n, 2, net.ENC_FC)
    assert np.allclose(enc_a, enc_b[:, ::-1], atol=1e-7)


def test_logstd_clipped_in_forward():
    p = init_params(np.random.default_rng(7), 0, 8)
    p["actor_logstd"] = np.array([10.0, -10.0, 0.5], dtype=np.float32)
    out = forward(p, None, np.zeros((1, 8), dtype=np.float32))
    assert np.allclose(out.action_logstd, [LOGSTD_MAX, LOGSTD_MIN, 0.5])


def test_forward_finite_on_random_inputs():
    rng = np.random.default_rng(8)
    p = init_params(rng, 3, 9)
    for _ in range(5):
        imgs, vec = rand_inputs(rng, channels=3, vec_dim=9)
        out = forward(p, imgs, vec)
        assert np.isfinite(out.action_mean).all()
        assert np.isfinite(out.value).all()


# -- conv oracle ---------------------------------------------------------


def _naive_conv(x, w, b, stride):
    n, c, h, wd = x.shape
    out_c, _, k, _ = w.shape
    oh = conv_out_size(h, k, stride)
    ow = conv_out_size(wd, k, stride)
    y = np.zeros((n, out_c, oh, ow), dtype=x.dtype)
    for bi in range(n):
        for o in range(out_c):
            for i in range(oh):
                for j in range(ow):
                    patch = x[bi, :, i * stride : i * stride + k, j * stride : j * stride + k]
                    y[bi, o, i, j] = np.sum(patch * w[o]) + b[o]
    return y


def test_conv_forward_matches_naive_oracle():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 12, 12))
    w = rng.standard_normal((4, 3, 4, 4))
    b = rng.standard_normal(4)
    y, _ = net._conv_forward(x, w, b, stride=2)
    assert np.allclose(y, _naive_conv(x, w, b, 2), atol=1e-10)


# -- backward ------------------------------------------------------------


def test_zero_head_grads_give_zero_param_grads():
    rng = np.random.default_rng(10)
    p = init_params(rng, 1, 8)
    imgs, vec = rand_inputs(rng)
    out = forward(p, imgs, vec)
    g = backward(p, out, np.zeros((3, ACTION_DIM)), np.zeros(3), np.zeros(ACTION_DIM))
    assert g.keys() == p.keys()
    assert all(not v.any() for v in g.values())


def test_head_gradient_separation():
    rng = np.random.default_rng(11)
    p = init_params(rng, 0, 8)
    _, vec = rand_inputs(rng, channels=0)
    out = forward(p, None, vec)
    g_actor = backward(p, out, np.ones((3, ACTION_DIM)), np.zeros(3))
    assert not g_actor["critic_w"].any() and not g_actor["critic_b"].any()
    assert g_actor["actor_mean_w"].any()
    out = forward(p, None, vec)
    g_critic = backward(p, out, np.zeros((3, ACTION_DIM)), np.ones(3))
    assert not g_critic["actor_mean_w"].any() and not g_critic["actor_mean_b"].any()
    assert g_critic["critic_w"].any()


def test_logstd_grad_masked_at_clip_bounds():
    rng = np.random.default_rng(12)
    p = init_params(rng, 0, 8)
    p["actor_logstd"] = np.array([LOGSTD_MIN - 1.0, 0.0, LOGSTD_MAX + 1.0], np.float32)
    _, vec = rand_inputs(rng, channels=0)
    out = forward(p, None, vec)
    g = backward(p, out, np.zeros((3, ACTION_DIM)), np.zeros(3), np.ones(ACTION_DIM))
    assert g["actor_logstd"][0] == 0.0 and g["actor_logstd"][2] == 0.0
    assert g["actor_logstd"][1] == 1.0


def test_backward_requires_cache():
    p = init_params(np.random.default_rng(13), 0, 8)
    out = forward(p, None, np.zeros((1, 8), dtype=np.float32))
    out.cache = {}
    with pytest.raises(UsageError):
        backward(p, out, np.zeros((1, ACTION_DIM)), np.zeros(1))


# -- finite-difference verification --------------------------------------


def test_grad_check_small_sample_passes():
    report = grad_check(
        np.random.default_rng(0), channels=1, batch=2, max_elems_per_tensor=4
    )
    assert set(report) == set(init_params(np.random.default_rng(0), 1, 8).keys())
    worst = max(report.values())
    assert worst < 1e-4, report


def test_grad_check_image_free_full():
    report = grad_check(np.random.default_rng(1), channels=0, batch=4)
    assert max(report.values()) < 1e-4, report


def test_grad_check_detects_corruption():
    report = grad_check(
        np.random.default_rng(2),
        channels=0,
        batch=2,
        max_elems_per_tensor=8,
        corrupt="trunk_b",
    )
    assert report["trunk_b"] > 1e-3
    clean = {k: v for k, v in report.items() if k != "trunk_b"}
    assert max(clean.values()) < 1e-4
