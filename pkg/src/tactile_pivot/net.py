"""Fixed actor-critic network with hand-written forward/backward passes.

Shared convolutional encoder over both tactile images, a tanh MLP over the
proprioception vector, a fused trunk, and Gaussian-policy heads. The graph
is fixed, so gradients are coded directly (no general autodiff); a
finite-difference checker validates every parameter tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOGSTD_MIN, LOGSTD_MAX = -5.0, 2.0
ACTION_DIM = 3

# (out_channels, kernel, stride) per conv layer; input image is 64x64.
CONV_SPEC = ((16, 8, 4), (32, 4, 2), (32, 3, 1))
ENC_FC = 128
PROPRIO_FC = 64
TRUNK_FC = 256


class UsageError(RuntimeError):
    pass


def conv_out_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _conv_sizes():
    s = 64
    sizes = []
    for _, k, st in CONV_SPEC:
        s = conv_out_size(s, k, st)
        sizes.append(s)
    return sizes


CONV_SIZES = _conv_sizes()
FLAT_SIZE = CONV_SPEC[-1][0] * CONV_SIZES[-1] ** 2


def _orthogonal(rng: np.random.Generator, shape, gain: float, dtype) -> np.ndarray:
    rows = shape[0]
    cols = int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray((gain * q[:rows, :cols]).reshape(shape), dtype=dtype)


def init_params(
    rng: np.random.Generator, channels: int, vec_dim: int, dtype=np.float32
) -> dict:
    """Orthogonal init; ``channels`` 0 builds the image-free variant."""
    if channels not in (0, 1, 3):
        raise ValueError(f"channels must be 0, 1 or 3, got {channels}")
    g = math.sqrt(2.0)
    p: dict[str, np.ndarray] = {}
    trunk_in = PROPRIO_FC
    if channels:
        in_c = channels
        for i, (out_c, k, _) in enumerate(CONV_SPEC, start=1):
            p[f"conv{i}_w"] = _orthogonal(rng, (out_c, in_c, k, k), g, dtype)
            p[f"conv{i}_b"] = np.zeros(out_c, dtype)
            in_c = out_c
        p["enc_w"] = _orthogonal(rng, (ENC_FC, FLAT_SIZE), g, dtype)
        p["enc_b"] = np.zeros(ENC_FC, dtype)
        trunk_in += 2 * ENC_FC
    p["proprio_w"] = _orthogonal(rng, (PROPRIO_FC, vec_dim), g, dtype)
    p["proprio_b"] = np.zeros(PROPRIO_FC, dtype)
    p["trunk_w"] = _orthogonal(rng, (TRUNK_FC, trunk_in), g, dtype)
    p["trunk_b"] = np.zeros(TRUNK_FC, dtype)
    p["actor_mean_w"] = _orthogonal(rng, (ACTION_DIM, TRUNK_FC), 0.01, dtype)
    p["actor_mean_b"] = np.zeros(ACTION_DIM, dtype)
    p["actor_logstd"] = np.zeros(ACTION_DIM, dtype)
    p["critic_w"] = _orthogonal(rng, (1, TRUNK_FC), 1.0, dtype)
    p["critic_b"] = np.zeros(1, dtype)
    return p


def param_channels(params: dict) -> int:
    if "conv1_w" not in params:
        return 0
    return params["conv1_w"].shape[1]


# -- im2col machinery ----------------------------------------------------

_COL_INDEX_CACHE: dict = {}


def _col_indices(c: int, h: int, w: int, k: int, stride: int):
    key = (c, h, w, k, stride)
    cached = _COL_INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    oh = conv_out_size(h, k, stride)
    ow = conv_out_size(w, k, stride)
    i0 = np.repeat(np.arange(k), k)
    j0 = np.tile(np.arange(k), k)
    base = (np.arange(c) * h * w)[:, None]
    patch = base + (i0 * w + j0)[None, :]            # (c, k*k)
    starts = (np.arange(oh)[:, None] * stride * w) + np.arange(ow)[None, :] * stride
    idx = starts.reshape(-1)[:, None] + patch.reshape(-1)[None, :]  # (oh*ow, c*k*k)
    _COL_INDEX_CACHE[key] = (idx, oh, ow)
    return idx, oh, ow


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    n, c, h, wd = x.shape
    out_c, _, k, _ = w.shape
    idx, oh, ow = _col_indices(c, h, wd, k, stride)
    cols = x.reshape(n, -1)[:, idx]                   # (n, oh*ow, c*k*k)
    # flat 2D GEMM: much faster than a batched 3D matmul
    y = cols.reshape(n * oh * ow, -1) @ w.reshape(out_c, -1).T + b
    y = y.reshape(n, oh * ow, out_c).transpose(0, 2, 1).reshape(n, out_c, oh, ow)
    return y, cols


def _conv_backward(
    dy: np.ndarray, cols: np.ndarray, x_shape, w: np.ndarray, stride: int, need_dx: bool = True
):
    n, c, h, wd = x_shape
    out_c, _, k, _ = w.shape
    idx, oh, ow = _col_indices(c, h, wd, k, stride)
    dy_cols = dy.reshape(n, out_c, -1).transpose(0, 2, 1)     # (n, oh*ow, out_c)
    dw = np.tensordot(dy_cols, cols, axes=([0, 1], [0, 1])).reshape(w.shape)
    db = dy_cols.sum(axis=(0, 1))
    if not need_dx:
        return None, dw, db
    dcols = (dy_cols.reshape(n * oh * ow, out_c) @ w.reshape(out_c, -1)).reshape(
        n, oh * ow, -1
    )
    chw = c * h * wd
    flat_idx = (np.arange(n)[:, None, None] * chw + idx[None, :, :]).reshape(-1)
    dx = np.bincount(flat_idx, weights=dcols.reshape(-1), minlength=n * chw)
    return dx.astype(dy.dtype).reshape(x_shape), dw, db


# -- forward / backward --------------------------------------------------


@dataclass
class NetOutput:
    action_mean: np.ndarray   # (n, 3)
    action_logstd: np.ndarray  # (3,)
    value: np.ndarray         # (n,)
    cache: dict


def forward(params: dict, images: np.ndarray | None, vec: np.ndarray) -> NetOutput:
    """Batched forward pass.

    ``images`` is (n, 2, C, 64, 64) for the two sensors (None for the
    image-free variant); ``vec`` is (n, D). Both sensors share the conv
    encoder; activations are cached for backward.
    """
    dtype = params["trunk_w"].dtype
    n = vec.shape[0]
    cache: dict = {"vec": vec.astype(dtype)}
    feats = []
    if param_channels(params):
        if images is None:
            raise UsageError("network expects tactile images")
        x = images.astype(dtype).reshape(n * 2, *images.shape[2:])
        cache["conv_inputs"] = []
        for i, (_, _, stride) in enumerate(CONV_SPEC, start=1):
            y, cols = _conv_forward(x, params[f"conv{i}_w"], params[f"conv{i}_b"], stride)
            cache["conv_inputs"].append((x.shape, cols))
            x = np.maximum(y, 0.0)
            cache[f"relu{i}"] = x
        flat = x.reshape(n * 2, -1)
        cache["flat"] = flat
        enc = np.maximum(flat @ params["enc_w"].T + params["enc_b"], 0.0)
        cache["enc"] = enc
        feats.append(enc.reshape(n, 2 * ENC_FC))
    pro = np.tanh(cache["vec"] @ params["proprio_w"].T + params["proprio_b"])
    cache["pro"] = pro
    feats.append(pro)
    fused = np.concatenate(feats, axis=1)
    cache["fused"] = fused
    trunk = np.maximum(fused @ params["trunk_w"].T + params["trunk_b"], 0.0)
    cache["trunk"] = trunk
    mean = trunk @ params["actor_mean_w"].T + params["actor_mean_b"]
    value = (trunk @ params["critic_w"].T + params["critic_b"])[:, 0]
    logstd = np.clip(params["actor_logstd"], LOGSTD_MIN, LOGSTD_MAX).astype(dtype)
    return NetOutput(mean, logstd, value, cache)


def backward(
    params: dict,
    out: NetOutput,
    d_mean: np.ndarray,
    d_value: np.ndarray,
    d_logstd: np.ndarray | None = None,
) -> dict:
    """Exact gradients of a scalar loss given head gradients."""
    cache = out.cache
    if not cache:
        raise UsageError("backward requires the cache from forward()")
    dtype = params["trunk_w"].dtype
    d_mean = d_mean.astype(dtype)
    d_value = d_value.astype(dtype)
    grads: dict[str, np.ndarray] = {}
    logstd_raw = params["actor_logstd"]
    inside = (logstd_raw > LOGSTD_MIN) & (logstd_raw < LOGSTD_MAX)
    if d_logstd is None:
        grads["actor_logstd"] = np.zeros_like(logstd_raw)
    else:
        grads["actor_logstd"] = (d_logstd.astype(dtype) * inside).astype(dtype)

    trunk = cache["trunk"]
    grads["actor_mean_w"] = d_mean.T @ trunk
    grads["actor_mean_b"] = d_mean.sum(axis=0)
    dv = d_value[:, None]
    grads["critic_w"] = dv.T @ trunk
    grads["critic_b"] = dv.sum(axis=0)
    d_trunk = d_mean @ params["actor_mean_w"] + dv @ params["critic_w"]
    d_trunk = d_trunk * (trunk > 0.0)
    grads["trunk_w"] = d_trunk.T @ cache["fused"]
    grads["trunk_b"] = d_trunk.sum(axis=0)
    d_fused = d_trunk @ params["trunk_w"]

    channels = param_channels(params)
    if channels:
        d_encfeat = d_fused[:, : 2 * ENC_FC]
        d_pro = d_fused[:, 2 * ENC_FC :]
    else:
        d_pro = d_fused
    pro = cache["pro"]
    d_pro = d_pro * (1.0 - pro * pro)
    grads["proprio_w"] = d_pro.T @ cache["vec"]
    grads["proprio_b"] = d_pro.sum(axis=0)

    if channels:
        n = pro.shape[0]
        d_enc = d_encfeat.reshape(n * 2, ENC_FC) * (cache["enc"] > 0.0)
        grads["enc_w"] = d_enc.T @ cache["flat"]
        grads["enc_b"] = d_enc.sum(axis=0)
        dx = (d_enc @ params["enc_w"]).reshape(cache[f"relu{len(CONV_SPEC)}"].shape)
        for i in range(len(CONV_SPEC), 0, -1):
            dx = dx * (cache[f"relu{i}"] > 0.0)
            x_shape, cols = cache["conv_inputs"][i - 1]
            dx, dw, db = _conv_backward(
                dx, cols, x_shape, params[f"conv{i}_w"], CONV_SPEC[i - 1][2], need_dx=i > 1
            )
            grads[f"conv{i}_w"] = dw
            grads[f"conv{i}_b"] = db
    return grads


# -- gradient verification ----------------------------------------------


def _fd_loss(params, images, vec, w_mean, w_value, w_logstd):
    o = forward(params, images, vec)
    loss = (
        float((w_mean * o.action_mean).sum())
        + float(w_value @ o.value)
        + float(w_logstd @ o.action_logstd)
    )
    c = o.cache
    masks = [c["pro"], c["trunk"] > 0.0]
    if "enc" in c:
        masks.append(c["enc"] > 0.0)
        masks.extend(c[f"relu{i}"] > 0.0 for i in range(1, len(CONV_SPEC) + 1))
    return loss, masks[1:]


def _masks_equal(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _fd_chunk(task) -> np.ndarray:
    """Central differences for one index chunk.

    A probe that flips any ReLU activation between the +/- evaluations
    straddles a kink, where the secant does not estimate the derivative;
    such probes shrink their step until both evaluations share one smooth
    piece.
    """
    params, images, vec, w_mean, w_value, w_logstd, name, idx, eps = task
    pf = params[name].reshape(-1)
    num = np.empty(idx.size)
    for j, i in enumerate(idx):
        orig = pf[i]
        e = eps
        for _ in range(4):
            pf[i] = orig + e
            lp, masks_p = _fd_loss(params, images, vec, w_mean, w_value, w_logstd)
            pf[i] = orig - e
            lm, masks_m = _fd_loss(params, images, vec, w_mean, w_value, w_logstd)
            pf[i] = orig
            if _masks_equal(masks_p, masks_m):
                break
            e /= 10.0
        num[j] = (lp - lm) / (2.0 * e)
    return num


class _FdEvaluator:
    """Structured central differences for the fixed graph.

    A probe of a layer-l parameter leaves every activation before l
    unchanged, so the +/- evaluations reuse the base forward pass up to l.
    Fully connected probes additionally vectorize across elements: the
    loss is linear in the trunk output, so perturbing one unit reduces to
    a rank-one update of the trunk pre-activation. Probes whose +/- points
    straddle a ReLU kink (where the secant is not a derivative estimate)
    are re-done with the generic shrinking-step probe.
    """

    def __init__(self, params, images, vec, w_mean, w_value, w_logstd, eps):
        self.params = params
        self.images = images
        self.vec = vec.astype(np.float64)
        self.w_mean = w_mean
        self.w_value = w_value
        self.w_logstd = w_logstd
        self.eps = eps
        self.channels = param_channels(params)
        n = vec.shape[0]
        self.n = n
        # base forward keeping pre-activations
        if self.channels:
            x = images.astype(np.float64).reshape(n * 2, *images.shape[2:])
            self.conv_pre, self.conv_cols = [], []
            for i, (_, _, stride) in enumerate(CONV_SPEC, start=1):
                y, cols = _conv_forward(x, params[f"conv{i}_w"], params[f"conv{i}_b"], stride)
                self.conv_pre.append(y)
                self.conv_cols.append(cols)
                x = np.maximum(y, 0.0)
            self.flat = x.reshape(n * 2, -1)
            self.enc_pre = self.flat @ params["enc_w"].T + params["enc_b"]
            enc = np.maximum(self.enc_pre, 0.0)
            self.enc_feat = enc.reshape(n, 2 * ENC_FC)
        self.pro_pre = self.vec @ params["proprio_w"].T + params["proprio_b"]
        self.pro = np.tanh(self.pro_pre)
        feats = [self.enc_feat, self.pro] if self.channels else [self.pro]
        self.fused = np.concatenate(feats, axis=1)
        self.t_pre = self.fused @ params["trunk_w"].T + params["trunk_b"]
        self.trunk = np.maximum(self.t_pre, 0.0)
        # loss = sum(trunk * q) + terms independent of the trunk
        self.q = w_mean @ params["actor_mean_w"] + w_value[:, None] * params["critic_w"]
        self.pro_offset = 2 * ENC_FC if self.channels else 0

    # ---- generic fallback on flagged probes ----
    def _slow(self, name, idx):
        if idx.size == 0:
            return np.empty(0)
        return _fd_chunk(
            (
                self.params,
                self.images,
                self.vec,
                self.w_mean,
                self.w_value,
                self.w_logstd,
                name,
                idx,
                self.eps,
            )
        )

    def _trunk_losses(self, t_new):
        # t_new: (n, TRUNK_FC, K) perturbed trunk pre-activations
        return np.einsum("nck,nc->k", np.maximum(t_new, 0.0), self.q)

    # ---- per-tensor numeric gradients ----
    def head_linear(self, name, idx):
        """Heads are affine in their parameters; the secant is exact."""
        p = self.params[name]
        if name == "actor_mean_w":
            i, j = np.unravel_index(idx, p.shape)
            return np.einsum("nk,nk->k", self.w_mean[:, i], self.trunk[:, j])
        if name == "actor_mean_b":
            return self.w_mean.sum(axis=0)[idx]
        if name == "critic_w":
            j = idx % p.shape[1]
            return self.w_value @ self.trunk[:, j]
        if name == "critic_b":
            return np.full(idx.size, self.w_value.sum())
        raise ValueError(name)

    def logstd(self, idx):
        num = np.empty(idx.size)
        th = self.params["actor_logstd"]
        for k, i in enumerate(idx):
            lp = self.w_logstd[i] * np.clip(th[i] + self.eps, LOGSTD_MIN, LOGSTD_MAX)
            lm = self.w_logstd[i] * np.clip(th[i] - self.eps, LOGSTD_MIN, LOGSTD_MAX)
            num[k] = (lp - lm) / (2.0 * self.eps)
        return num

    def trunk_probe(self, name, idx):
        p = self.params[name]
        if name == "trunk_w":
            i, j = np.unravel_index(idx, p.shape)
            f = self.fused[:, j]                       # (n, K)
        else:
            i = idx
            f = np.ones((self.n, idx.size))
        P = self.t_pre[:, i]                           # (n, K)
        e = self.eps
        dp, dm = np.maximum(P + e * f, 0.0), np.maximum(P - e * f, 0.0)
        crossed = ((P + e * f > 0.0) != (P - e * f > 0.0)).any(axis=0)
        num = np.einsum("nk,nk->k", dp - dm, self.q[:, i]) / (2.0 * e)
        num[crossed] = self._slow(name, idx[crossed])
        return num

    def _rank_updates(self, cols, deltas):
        """Trunk losses after rank-one fused updates.

        cols: list of (TRUNK_FC, K) trunk weight columns; deltas: matching
        (n, K) feature deltas. Returns (losses (K,), crossed (K,)).
        """
        upd = cols[0][None, :, :] * deltas[0][:, None, :]
        for c, d in zip(cols[1:], deltas[1:]):
            upd += c[None, :, :] * d[:, None, :]
        t_new = self.t_pre[:, :, None] + upd
        crossed = ((t_new > 0.0) != (self.t_pre[:, :, None] > 0.0)).any(axis=(0, 1))
        return self._trunk_losses(t_new), crossed

    def proprio_probe(self, name, idx):
        p = self.params[name]
        if name == "proprio_w":
            i, j = np.unravel_index(idx, p.shape)
            f = self.vec[:, j]
        else:
            i = idx
            f = np.ones((self.n, idx.size))
        P = self.pro_pre[:, i]
        e = self.eps
        col = self.params["trunk_w"][:, self.pro_offset + i]
        num = np.empty(idx.size)
        crossed = np.zeros(idx.size, bool)
        for sl in _index_chunks(idx.size, 4096):
            lp, cp = self._rank_updates([col[:, sl]], [np.tanh(P[:, sl] + e * f[:, sl]) - self.pro[:, i[sl]]])
            lm, cm = self._rank_updates([col[:, sl]], [np.tanh(P[:, sl] - e * f[:, sl]) - self.pro[:, i[sl]]])
            num[sl] = (lp - lm) / (2.0 * e)
            crossed[sl] = cp | cm
        num[crossed] = self._slow(name, idx[crossed])
        return num

    def enc_probe(self, name, idx):
        p = self.params[name]
        if name == "enc_w":
            i, j = np.unravel_index(idx, p.shape)
        else:
            i, j = idx, None
        e = self.eps
        pre = self.enc_pre.reshape(self.n, 2, ENC_FC)
        flat = self.flat.reshape(self.n, 2, -1)
        tw = self.params["trunk_w"]
        num = np.empty(idx.size)
        crossed = np.zeros(idx.size, bool)
        for sl in _index_chunks(idx.size, 2048):
            isl = i[sl]
            P = pre[:, :, isl]                          # (n, 2, K)
            f = flat[:, :, j[sl]] if j is not None else np.ones_like(P)
            base = np.maximum(P, 0.0)
            dp = np.maximum(P + e * f, 0.0) - base      # (n, 2, K)
            dm = np.maximum(P - e * f, 0.0) - base
            c_enc = ((P + e * f > 0.0) != (P - e * f > 0.0)).any(axis=(0, 1))
            cols = [tw[:, isl], tw[:, ENC_FC + isl]]
            lp, cp = self._rank_updates(cols, [dp[:, 0], dp[:, 1]])
            lm, cm = self._rank_updates(cols, [dm[:, 0], dm[:, 1]])
            num[sl] = (lp - lm) / (2.0 * e)
            crossed[sl] = c_enc | cp | cm
        num[crossed] = self._slow(name, idx[crossed])
        return num

    def _loss_from_conv(self, layer, y_new):
        """Loss and ReLU masks, restarting the forward at conv ``layer``."""
        p = self.params
        masks = []
        x = np.maximum(y_new, 0.0)
        masks.append(y_new > 0.0)
        for i in range(layer + 2, len(CONV_SPEC) + 1):
            y, _ = _conv_forward(x, p[f"conv{i}_w"], p[f"conv{i}_b"], CONV_SPEC[i - 1][2])
            x = np.maximum(y, 0.0)
            masks.append(y > 0.0)
        flat = x.reshape(self.n * 2, -1)
        enc_pre = flat @ p["enc_w"].T + p["enc_b"]
        masks.append(enc_pre > 0.0)
        fused = np.concatenate(
            [np.maximum(enc_pre, 0.0).reshape(self.n, 2 * ENC_FC), self.pro], axis=1
        )
        t_pre = fused @ p["trunk_w"].T + p["trunk_b"]
        masks.append(t_pre > 0.0)
        return float(np.sum(np.maximum(t_pre, 0.0) * self.q)), masks

    def conv_probe(self, name, idx):
        layer = int(name[4]) - 1
        p = self.params[name]
        y_base = self.conv_pre[layer]
        cols = self.conv_cols[layer]
        oh = y_base.shape[2]
        num = np.empty(idx.size)
        for k, flat_i in enumerate(idx):
            if name.endswith("_w"):
                o = flat_i // (p.size // p.shape[0])
                cidx = flat_i % (p.size // p.shape[0])
                delta = cols[:, :, cidx].reshape(self.n * 2, oh, -1)
            else:
                o = flat_i
                delta = 1.0
            e = self.eps
            for _ in range(4):
                y_new = y_base.copy()
                y_new[:, o] += e * delta
                lp, mp_ = self._loss_from_conv(layer, y_new)
                y_new = y_base.copy()
                y_new[:, o] -= e * delta
                lm, mm = self._loss_from_conv(layer, y_new)
                if _masks_equal(mp_, mm):
                    break
                e /= 10.0
            num[k] = (lp - lm) / (2.0 * e)
        return num

    def numeric(self, name, idx):
        if name.startswith("conv"):
            return self.conv_probe(name, idx)
        if name in ("enc_w", "enc_b"):
            return self.enc_probe(name, idx)
        if name in ("proprio_w", "proprio_b"):
            return self.proprio_probe(name, idx)
        if name in ("trunk_w", "trunk_b"):
            return self.trunk_probe(name, idx)
        if name == "actor_logstd":
            return self.logstd(idx)
        return self.head_linear(name, idx)


def _index_chunks(size: int, chunk: int):
    return [slice(a, min(a + chunk, size)) for a in range(0, size, chunk)]


def grad_check(
    rng: np.random.Generator,
    channels: int = 1,
    vec_dim: int = 8,
    batch: int = 4,
    eps: float = 1e-5,
    max_elems_per_tensor: int | None = None,
    corrupt: str | None = None,
) -> dict:
    """Compare analytic gradients against central finite differences.

    Runs in float64 over every element of every parameter tensor (or a
    random subset of ``max_elems_per_tensor`` per tensor). Returns
    {tensor name: max relative error}. The ``corrupt`` hook perturbs one
    tensor's analytic gradient so tests can confirm the checker catches
    faults.
    """
    params = init_params(rng, channels, vec_dim, dtype=np.float64)
    images = (
        rng.uniform(0.0, 1.0, size=(batch, 2, channels, 64, 64)) if channels else None
    )
    vec = rng.uniform(-1.0, 1.0, size=(batch, vec_dim))
    w_mean = rng.standard_normal((batch, ACTION_DIM))
    w_value = rng.standard_normal(batch)
    w_logstd = rng.standard_normal(ACTION_DIM)

    out = forward(params, images, vec)
    grads = backward(params, out, w_mean, w_value, w_logstd)
    if corrupt is not None:
        grads[corrupt] = grads[corrupt] + 1e-2

    ev = _FdEvaluator(params, images, vec, w_mean, w_value, w_logstd, eps)
    report = {}
    for name, g in grads.items():
        flat_idx = np.arange(params[name].size)
        if max_elems_per_tensor is not None and flat_idx.size > max_elems_per_tensor:
            flat_idx = np.sort(
                rng.choice(flat_idx.size, size=max_elems_per_tensor, replace=False)
            )
        num = ev.numeric(name, flat_idx)
        ana = g.reshape(-1)[flat_idx]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-6)
        report[name] = float(np.max(np.abs(ana - num) / denom))
    return report
