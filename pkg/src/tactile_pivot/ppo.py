"""Clipped-surrogate PPO with GAE, Adam and versioned binary checkpoints.

Rollouts come from a fixed-order vector of environments; updates run over
shuffled minibatches with per-minibatch advantage normalization, global
gradient-norm clipping and an adaptive-moment optimizer. Everything is
deterministic under a fixed seed.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import net
from .baselines import ObsMode
from .env import Observation, PivotEnv, VecEnv, obs_vector_size

ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 3e-4
    n_envs: int = 8
    n_steps: int = 256
    minibatch: int = 64
    epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    reward_scale: float = 0.01
    target_kl: float = 0.02     # stop the update epochs early past this; 0 disables
    total_steps: int = 200_000
    seed: int = 0
    eval_interval: int = 20_480
    eval_episodes: int = 50

    def __post_init__(self):
        if self.clip <= 0 or not 0 < self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("invalid PPO hyperparameters")
        if (self.n_envs * self.n_steps) % self.minibatch != 0:
            raise ValueError("minibatch must divide n_envs * n_steps")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")


@dataclass
class RolloutBuffer:
    images: np.ndarray | None   # (T, N, 2, C, 64, 64) float32
    vecs: np.ndarray            # (T, N, D)
    actions: np.ndarray         # (T, N, 3)
    logprobs: np.ndarray        # (T, N)
    values: np.ndarray          # (T, N)
    rewards: np.ndarray         # (T, N)
    dones: np.ndarray           # (T, N) float
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


def batch_obs(obs_list: list[Observation]):
    vec = np.stack([o.vector for o in obs_list])
    if obs_list[0].tactile_left is None:
        return None, vec
    imgs = np.stack(
        [
            np.stack(
                [
                    np.moveaxis(o.tactile_left, -1, 0),
                    np.moveaxis(o.tactile_right, -1, 0),
                ]
            )
            for o in obs_list
        ]
    )
    return imgs.astype(np.float32), vec


def gaussian_logprob(actions, mean, logstd):
    std = np.exp(logstd)
    z = (actions - mean) / std
    return -0.5 * ((z * z).sum(axis=-1) + ACTION_DIM_TERM + 2.0 * logstd.sum())


ACTION_DIM_TERM = net.ACTION_DIM * LOG_2PI


def collect_rollouts(
    venv: VecEnv, params: dict, cfg: PpoConfig, rng: np.random.Generator, obs_list
) -> tuple[RolloutBuffer, list, np.ndarray]:
    """Step all environments n_steps times with stochastic actions."""
    n = len(venv)
    imgs0, vec0 = batch_obs(obs_list)
    channels = net.param_channels(params)
    images = (
        np.empty((cfg.n_steps, n, 2, channels, 64, 64), dtype=np.float32)
        if channels
        else None
    )
    vecs = np.empty((cfg.n_steps, n, vec0.shape[1]), dtype=np.float32)
    actions = np.empty((cfg.n_steps, n, net.ACTION_DIM), dtype=np.float32)
    logprobs = np.empty((cfg.n_steps, n), dtype=np.float32)
    values = np.empty((cfg.n_steps, n), dtype=np.float32)
    rewards = np.empty((cfg.n_steps, n), dtype=np.float32)
    dones = np.empty((cfg.n_steps, n), dtype=np.float32)
    ep_infos = []
    for t in range(cfg.n_steps):
        imgs, vec = batch_obs(obs_list)
        out = net.forward(params, imgs, vec)
        std = np.exp(out.action_logstd)
        noise = rng.standard_normal((n, net.ACTION_DIM))
        acts = out.action_mean + std * noise
        logp = gaussian_logprob(acts, out.action_mean, out.action_logstd)
        obs_list, rew, done, infos = venv.step(np.clip(acts, -1.0, 1.0))
        if channels:
            images[t] = imgs
        vecs[t] = vec
        actions[t] = acts
        logprobs[t] = logp
        values[t] = out.value
        # scaled rewards keep returns O(1) so the value loss cannot swamp
        # the policy gradient through the shared trunk; logged/eval rewards
        # stay unscaled
        rewards[t] = rew * cfg.reward_scale
        dones[t] = done
        for inf in infos:
            if "success" in inf:
                ep_infos.append(inf)
    imgs, vec = batch_obs(obs_list)
    last_values = net.forward(params, imgs, vec).value
    buf = RolloutBuffer(images, vecs, actions, logprobs, values, rewards, dones)
    return buf, obs_list, last_values


def compute_gae(buf: RolloutBuffer, last_values: np.ndarray, cfg: PpoConfig) -> RolloutBuffer:
    T, n = buf.rewards.shape
    adv = np.zeros((T, n), dtype=np.float64)
    next_adv = np.zeros(n)
    next_values = last_values.astype(np.float64)
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - buf.dones[t]
        delta = buf.rewards[t] + cfg.gamma * not_done * next_values - buf.values[t]
        next_adv = delta + cfg.gamma * cfg.gae_lambda * not_done * next_adv
        adv[t] = next_adv
        next_values = buf.values[t].astype(np.float64)
    buf.advantages = adv.astype(np.float32)
    buf.returns = (adv + buf.values).astype(np.float32)
    return buf


class AdamState:
    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> dict:
        self.t += 1
        b1t = 1.0 - ADAM_B1**self.t
        b2t = 1.0 - ADAM_B2**self.t
        new = {}
        for k, p in params.items():
            g = grads.get(k)
            if g is None:
                new[k] = p
                continue
            g = g.astype(p.dtype)
            self.m[k] = ADAM_B1 * self.m[k] + (1 - ADAM_B1) * g
            self.v[k] = ADAM_B2 * self.v[k] + (1 - ADAM_B2) * g * g
            mh = self.m[k] / b1t
            vh = self.v[k] / b2t
            new[k] = p - lr * mh / (np.sqrt(vh) + ADAM_EPS)
        return new


def clip_grad_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


class NanLossError(RuntimeError):
    pass


def ppo_update(
    params: dict,
    buf: RolloutBuffer,
    cfg: PpoConfig,
    adam: AdamState,
    rng: np.random.Generator,
    raw_stats: bool = False,
) -> tuple[dict, dict]:
    """One full PPO update over the buffer; returns (params', stats).

    Stats are means over the executed minibatches, or the per-minibatch
    lists when ``raw_stats`` is set.
    """
    T, n = buf.rewards.shape
    total = T * n
    flat_imgs = (
        buf.images.reshape(total, *buf.images.shape[2:]) if buf.images is not None else None
    )
    flat_vecs = buf.vecs.reshape(total, -1)
    flat_acts = buf.actions.reshape(total, net.ACTION_DIM)
    flat_logp = buf.logprobs.reshape(total)
    flat_adv = buf.advantages.reshape(total)
    flat_ret = buf.returns.reshape(total)

    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_frac": [], "approx_kl": []}
    for _ in range(cfg.epochs):
        # guard against destructive updates: once the sampled policy has moved
        # past target_kl, further epochs on this stale buffer only overfit it
        if cfg.target_kl > 0 and stats["approx_kl"]:
            epoch_kl = float(np.mean(stats["approx_kl"][-max(1, total // cfg.minibatch):]))
            if epoch_kl > cfg.target_kl:
                break
        order = rng.permutation(total)
        for start in range(0, total, cfg.minibatch):
            mb = order[start : start + cfg.minibatch]
            m = mb.size
            adv = flat_adv[mb].astype(np.float64)
            if m > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            imgs = flat_imgs[mb] if flat_imgs is not None else None
            out = net.forward(params, imgs, flat_vecs[mb])
            mean = out.action_mean.astype(np.float64)
            logstd = out.action_logstd.astype(np.float64)
            std = np.exp(logstd)
            acts = flat_acts[mb].astype(np.float64)
            z = (acts - mean) / std
            logp = -0.5 * ((z * z).sum(axis=1) + ACTION_DIM_TERM + 2.0 * logstd.sum())
            log_ratio = logp - flat_logp[mb]
            ratio = np.exp(log_ratio)
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
            policy_loss = -np.minimum(unclipped, clipped).mean()
            v_err = out.value.astype(np.float64) - flat_ret[mb]
            value_loss = cfg.vf_coef * (v_err**2).mean()
            entropy = float(logstd.sum() + 0.5 * net.ACTION_DIM * (1.0 + LOG_2PI))
            loss = policy_loss + value_loss - cfg.ent_coef * entropy
            if not np.isfinite(loss):
                raise NanLossError(f"non-finite PPO loss: {loss}")

            # analytic head gradients
            use_unclipped = unclipped <= clipped
            d_logp = np.where(use_unclipped, -adv * ratio, 0.0) / m
            d_mean = d_logp[:, None] * (z / std)
            d_logstd_mat = d_logp[:, None] * (z * z - 1.0)
            d_logstd = d_logstd_mat.sum(axis=0) - cfg.ent_coef * np.ones(net.ACTION_DIM)
            d_value = 2.0 * cfg.vf_coef * v_err / m
            grads = net.backward(params, out, d_mean, d_value, d_logstd)
            grads, gnorm = clip_grad_norm(grads, cfg.max_grad_norm)
            params = adam.step(params, grads, cfg.lr)

            stats["policy_loss"].append(float(policy_loss))
            stats["value_loss"].append(float(value_loss))
            stats["entropy"].append(entropy)
            stats["clip_frac"].append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip)))
            stats["approx_kl"].append(float(np.mean(ratio - 1.0 - log_ratio)))
    if raw_stats:
        return params, stats
    return params, {k: float(np.mean(v)) for k, v in stats.items()}


# -- checkpoints ---------------------------------------------------------

CHECKPOINT_MAGIC = b"TPVT"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: dict, adam: AdamState | None, digest: int, extra: dict | None = None):
    """Atomic versioned binary dump of params (+ optimizer moments)."""
    tensors = dict(params)
    if adam is not None:
        for k, v in adam.m.items():
            tensors[f"adam.m.{k}"] = v
        for k, v in adam.v.items():
            tensors[f"adam.v.{k}"] = v
        tensors["adam.t"] = np.array([adam.t], dtype=np.float32)
    for k, v in (extra or {}).items():
        tensors[f"extra.{k}"] = np.asarray(v, dtype=np.float32)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IQI", CHECKPOINT_VERSION, digest, len(tensors)))
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype=np.float32)
            nb = name.encode()
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<Q", d))
            f.write(data.astype("<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, expect_digest: int | None = None):
    """Returns (params, adam_or_None, extra dict). Validates the header."""

    def _read(f, n, what):
        b = f.read(n)
        if len(b) != n:
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        return b

    with open(path, "rb") as f:
        if _read(f, 4, "magic") != CHECKPOINT_MAGIC:
            raise CheckpointError("bad checkpoint magic")
        version, digest, count = struct.unpack("<IQI", _read(f, 16, "header"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if expect_digest is not None and digest != expect_digest:
            raise CheckpointError(
                f"config digest mismatch: checkpoint {digest:#x}, expected {expect_digest:#x}"
            )
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(f, 4, "name length"))
            name = _read(f, nlen, "name").decode()
            (rank,) = struct.unpack("<I", _read(f, 4, "rank"))
            shape = tuple(
                struct.unpack("<Q", _read(f, 8, "dim"))[0] for _ in range(rank)
            )
            n_elems = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(
                _read(f, 4 * n_elems, f"tensor {name}"), dtype="<f4"
            ).reshape(shape)
            tensors[name] = data.copy()
        if f.read(1):
            raise CheckpointError("trailing bytes after last tensor")

    params = {k: v for k, v in tensors.items() if not k.startswith(("adam.", "extra."))}
    extra = {k[6:]: v for k, v in tensors.items() if k.startswith("extra.")}
    adam = None
    if "adam.t" in tensors:
        adam = AdamState(params)
        adam.t = int(tensors["adam.t"][0])
        for k in params:
            adam.m[k] = tensors[f"adam.m.{k}"]
            adam.v[k] = tensors[f"adam.v.{k}"]
    return params, adam, extra


def checkpoint_digest(params: dict) -> int:
    """Architecture digest: hash of sorted tensor names and shapes."""
    h = hashlib.blake2b(digest_size=8)
    for name in sorted(params):
        h.update(name.encode())
        h.update(str(params[name].shape).encode())
    return int.from_bytes(h.digest(), "little")


# -- training loop -------------------------------------------------------


def make_envs(cfg: PpoConfig, env_factory) -> VecEnv:
    """env_factory(seed, training) -> PivotEnv; per-env decorrelated seeds."""
    return VecEnv(
        [env_factory(cfg.seed * 10007 + i, True) for i in range(cfg.n_envs)]
    )


def evaluate_policy(params: dict, env: PivotEnv, n_episodes: int):
    """Deterministic (mean action) episodes; returns arrays of results."""
    succ = np.zeros(n_episodes)
    dev = np.zeros(n_episodes)
    rew = np.zeros(n_episodes)
    for ep in range(n_episodes):
        obs = env.reset()
        done = False
        total = 0.0
        info = {}
        while not done:
            imgs, vec = batch_obs([obs])
            out = net.forward(params, imgs, vec)
            obs, r, done, info = env.step(np.clip(out.action_mean[0], -1, 1))
            total += r
        succ[ep] = float(info.get("success", False))
        dev[ep] = info.get("deviation", np.nan)
        rew[ep] = total
    return succ, dev, rew


def train(
    cfg: PpoConfig,
    env_factory,
    out_dir,
    digest: int = 0,
    log=print,
    resume: str | None = None,
):
    """Full training run: rollouts, GAE, updates, periodic eval, checkpoints.

    Writes ``metrics.csv``, ``final.ckpt`` and ``best.ckpt`` under out_dir.
    env_factory(seed, training) builds one environment.
    """
    os.makedirs(out_dir, exist_ok=True)
    venv = make_envs(cfg, env_factory)
    obs_list = venv.reset()
    probe_imgs, probe_vec = batch_obs(obs_list)
    channels = 0 if probe_imgs is None else probe_imgs.shape[2]
    init_rng = np.random.default_rng((cfg.seed, 100))
    params = net.init_params(init_rng, channels, probe_vec.shape[1])
    adam = AdamState(params)
    steps_done = 0
    if resume:
        params, adam2, extra = load_checkpoint(resume, expect_digest=digest)
        if adam2 is not None:
            adam = adam2
        steps_done = int(extra.get("steps", np.array([0.0]))[0])

    rollout_rng = np.random.default_rng((cfg.seed, 101))
    update_rng = np.random.default_rng((cfg.seed, 102))
    eval_env = env_factory(cfg.seed * 10007 + 999_983, False)

    csv_path = os.path.join(out_dir, "metrics.csv")

    best_success = -1.0
    episodes = 0
    next_eval = steps_done
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["step", "episodes", "mean_reward", "success_rate", "mean_deviation"]
        )

        last_eval_step = -1

        def run_eval(step):
            nonlocal best_success, last_eval_step
            last_eval_step = step
            eval_env.scene_rng = np.random.default_rng((cfg.seed, 200))
            succ, dev, rew = evaluate_policy(params, eval_env, cfg.eval_episodes)
            writer.writerow(
                [
                    step,
                    episodes,
                    f"{rew.mean():.6f}",
                    f"{succ.mean():.6f}",
                    f"{dev.mean():.6f}",
                ]
            )
            f.flush()
            log(
                f"step {step}: reward {rew.mean():.2f} success {succ.mean():.2f} "
                f"deviation {dev.mean():.3f}"
            )
            if succ.mean() > best_success:
                best_success = succ.mean()
                save_checkpoint(
                    os.path.join(out_dir, "best.ckpt"),
                    params,
                    adam,
                    digest,
                    extra={"steps": [step]},
                )

        while steps_done < cfg.total_steps:
            buf, obs_list, last_values = collect_rollouts(
                venv, params, cfg, rollout_rng, obs_list
            )
            buf = compute_gae(buf, last_values, cfg)
            snap_m = {k: v.copy() for k, v in adam.m.items()}
            snap_v = {k: v.copy() for k, v in adam.v.items()}
            snap_t = adam.t
            try:
                params, stats = ppo_update(params, buf, cfg, adam, update_rng)
            except NanLossError as e:
                adam.m, adam.v, adam.t = snap_m, snap_v, snap_t
                log(f"aborting iteration, params unchanged: {e}")
            steps_done += cfg.n_envs * cfg.n_steps
            episodes += int(buf.dones.sum())
            if steps_done >= next_eval:
                run_eval(steps_done)
                next_eval += cfg.eval_interval
        if last_eval_step != steps_done:
            run_eval(steps_done)
    save_checkpoint(
        os.path.join(out_dir, "final.ckpt"), params, adam, digest, extra={"steps": [steps_done]}
    )
    return params
