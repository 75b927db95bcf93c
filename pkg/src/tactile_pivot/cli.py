"""Command-line entry point: training, evaluation, calibration and plots.

Every artifact lands under ``runs/<timestamp>-<digest>/`` (root overridable
via PIVOT_TOUCH_RUNS_DIR); reruns never overwrite existing run directories.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import evalsuite, net, ppo
from .baselines import ObsMode, run_pca_policy
from .config import RunConfig, load_config, make_env_factory
from .scene import ConfigError


class UsageError(Exception):
    pass


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"--set expects section.key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load_cfg(args) -> RunConfig:
    overrides = _parse_overrides(args.set)
    if getattr(args, "repr", None):
        overrides["repr.mode"] = args.repr
    if getattr(args, "aug", None):
        overrides["repr.augment"] = args.aug
    if getattr(args, "obs", None):
        overrides["train.obs"] = args.obs
    try:
        return load_config(args.config, overrides, args.allow_out_of_range)
    except ConfigError as e:
        raise UsageError(str(e)) from e


def _runs_root() -> str:
    return os.environ.get("PIVOT_TOUCH_RUNS_DIR", "runs")


def _run_dir(args, cfg: RunConfig, tag: str) -> str:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        return args.out
    return _make_run_dir(cfg, tag)


def _make_run_dir(cfg: RunConfig, tag: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(_runs_root(), f"{stamp}-{cfg.digest:016x}" + (f"-{tag}" if tag else ""))
    path = base
    k = 1
    while os.path.exists(path):
        path = f"{base}-{k}"
        k += 1
    os.makedirs(path)
    return path


def _write_config(cfg: RunConfig, run_dir: str):
    with open(os.path.join(run_dir, "config.ini"), "w") as f:
        for section, kv in cfg.raw.items():
            f.write(f"[{section}]\n")
            for key, value in kv.items():
                f.write(f"{key} = {value}\n")
            f.write("\n")


# -- subcommands ---------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.ppo.seed]
    run_dir = _run_dir(args, cfg, "train")
    _write_config(cfg, run_dir)
    factory = make_env_factory(cfg)
    for seed in seeds:
        ppo_cfg = replace(cfg.ppo, seed=seed)
        out_dir = os.path.join(run_dir, f"seed{seed}") if len(seeds) > 1 else run_dir
        print(f"training seed {seed} -> {out_dir}")
        ppo.train(ppo_cfg, factory, out_dir, digest=cfg.digest, resume=args.resume)
    print(f"artifacts in {run_dir}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    run_dir = _run_dir(args, cfg, "eval")
    factory = make_env_factory(cfg)
    seeds = cfg.eval_seeds
    if args.policy == "pca":
        if not args.oracle_ckpt:
            raise UsageError("--policy pca requires --oracle-ckpt")
        oracle_params, _, _ = ppo.load_checkpoint(args.oracle_ckpt)

        def policy_fn(vec):
            out = net.forward(oracle_params, None, vec[None, :])
            return np.clip(out.action_mean[0], -1, 1)

        succ_by_seed, dev_by_seed = [], []
        for seed in seeds:
            env = factory(seed, False)
            results = [
                run_pca_policy(policy_fn, env) for _ in range(cfg.eval_episodes)
            ]
            succ_by_seed.append(np.mean([r.get("success", False) for r in results]))
            dev_by_seed.append(np.mean([r.get("deviation", np.nan) for r in results]))
        report = evalsuite.EvalReport(
            label="pca",
            n_episodes=cfg.eval_episodes * len(seeds),
            mean_deviation=float(np.mean(dev_by_seed)),
            std_deviation=float(np.std(dev_by_seed)),
            success_rate=float(np.mean(succ_by_seed)),
            std_success=float(np.std(succ_by_seed)),
        )
    else:
        if not args.ckpt:
            raise UsageError("--ckpt is required for --policy net")
        params, _, _ = ppo.load_checkpoint(args.ckpt, expect_digest=None)
        report = evalsuite.evaluate(
            params, lambda s: factory(s, False), cfg.eval_episodes, seeds
        )
    _emit_reports(run_dir, [report])
    return 0


def cmd_shift_eval(args) -> int:
    cfg = _load_cfg(args)
    run_dir = _run_dir(args, cfg, "shift")
    params, _, _ = ppo.load_checkpoint(args.ckpt)
    factory = make_env_factory(cfg)
    base = evalsuite.evaluate(
        params, lambda s: factory(s, False), cfg.eval_episodes, cfg.eval_seeds
    )
    shifts = evalsuite.default_shift_suite()

    def shifted_factory(shift, seed):
        return make_env_factory(cfg, shift)(seed, False)

    reports = evalsuite.shift_evaluate(
        params, shifted_factory, shifts, cfg.eval_episodes, cfg.eval_seeds
    )
    drop = evalsuite.mean_success_drop(base, reports)
    _emit_reports(run_dir, [base] + reports)
    print(f"mean success drop over {len(reports)} shifts: {drop:.3f}")
    return 0


def cmd_gridsearch_phi(args) -> int:
    cfg = _load_cfg(args)
    candidates = (
        [float(c) for c in args.candidates.split(",")]
        if args.candidates
        else [round(0.01 * k, 2) for k in range(1, 16)]
    )
    best = evalsuite.gridsearch_phi(
        cfg.render, candidates, n_frames=args.frames, seed=args.seed, dyn_cfg=cfg.dyn
    )
    print(f"best phi: {best}")
    return 0


def cmd_render_demo(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .dynamics import Sensor, contact_patch
    from .render import canonical_image, heightmap_from_patch, render_phong

    cfg = _load_cfg(args)
    run_dir = _run_dir(args, cfg, "demo")
    factory = make_env_factory(cfg)
    env = factory(args.seed, False)
    env.reset()
    for _ in range(args.steps):
        env.step([0.0, -1.0, 0.3])
    for sensor in (Sensor.LEFT, Sensor.RIGHT):
        patch = contact_patch(env.state, sensor, cfg.dyn)
        height = heightmap_from_patch(patch, cfg.render)
        frame = render_phong(height, cfg.render, sensor)
        name = sensor.value
        plt.imsave(os.path.join(run_dir, f"frame_{name}.png"), frame.rgb)
        np.savetxt(
            os.path.join(run_dir, f"height_{name}.csv"), height, delimiter=","
        )
    canon = canonical_image(cfg.render)
    plt.imsave(os.path.join(run_dir, "canonical.png"), canon.rgb)
    print(f"wrote frames to {run_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        report = net.grad_check(
            rng,
            channels=args.channels,
            max_elems_per_tensor=args.max_elems,
        )
        for name, err in sorted(report.items()):
            print(f"seed {seed} {name:16s} max rel err {err:.3e}")
            worst = max(worst, err)
    if worst >= 1e-4:
        print(f"FAIL: worst error {worst:.3e} >= 1e-4")
        return 2
    print(f"PASS: worst error {worst:.3e}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    run_dir = _run_dir(args, cfg, "ablate")
    reprs = [r.strip() for r in (args.repr or "rgb,diff,binary").split(",")]
    augs = {"on": ["true"], "off": ["false"], "both": ["false", "true"]}[args.aug_sweep]
    seeds = list(range(args.seeds))
    rows = []
    for mode in reprs:
        for aug in augs:
            sub_cfg = _load_cfg_with(args, {"repr.mode": mode, "repr.augment": aug})
            factory = make_env_factory(sub_cfg)
            for seed in seeds:
                tag = f"{mode}-{'aug' if aug == 'true' else 'noaug'}-s{seed}"
                out_dir = os.path.join(run_dir, tag)
                print(f"ablate: training {tag}")
                params = ppo.train(
                    replace(sub_cfg.ppo, seed=seed),
                    factory,
                    out_dir,
                    digest=sub_cfg.digest,
                )
                report = evalsuite.evaluate(
                    params,
                    lambda s: factory(s, False),
                    sub_cfg.eval_episodes,
                    (seed,),
                    label=tag,
                )
                rows.append(
                    [mode, aug, seed, f"{report.success_rate:.4f}", f"{report.mean_deviation:.4f}"]
                )
    path = os.path.join(run_dir, "ablation.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["repr", "augment", "seed", "success_rate", "mean_deviation"])
        w.writerows(rows)
    print(f"wrote {path}")
    return 0


def _load_cfg_with(args, extra: dict) -> RunConfig:
    overrides = _parse_overrides(args.set)
    overrides.update(extra)
    try:
        return load_config(args.config, overrides, args.allow_out_of_range)
    except ConfigError as e:
        raise UsageError(str(e)) from e


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(args.csv, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise UsageError(f"no data rows in {args.csv}")
    steps = [float(r["step"]) for r in rows]
    reward = [float(r["mean_reward"]) for r in rows]
    success = [float(r["success_rate"]) for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(steps, reward, marker="o")
    axes[0].set_xlabel("environment steps")
    axes[0].set_ylabel("mean eval reward")
    axes[1].plot(steps, success, marker="o", color="tab:green")
    axes[1].set_xlabel("environment steps")
    axes[1].set_ylabel("success rate")
    axes[1].set_ylim(-0.02, 1.02)
    fig.tight_layout()
    out = args.out or os.path.splitext(args.csv)[0] + ".svg"
    fig.savefig(out, format="svg")
    print(f"wrote {out}")
    return 0


def _emit_reports(run_dir: str, reports):
    path = os.path.join(run_dir, "eval.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["label", "n_episodes", "mean_deviation", "std_deviation", "success_rate", "std_success"]
        )
        for r in reports:
            w.writerow(r.row())
    header = f"{'label':>12s} {'episodes':>8s} {'deviation':>10s} {'success':>8s}"
    print(header)
    for r in reports:
        print(
            f"{r.label:>12s} {r.n_episodes:8d} {r.mean_deviation:10.3f} {r.success_rate:8.3f}"
        )
    print(f"wrote {path}")


# -- argument parsing ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tactile-pivot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, repr_flags=True):
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument(
            "--set", action="append", metavar="SECTION.KEY=VALUE", help="config override"
        )
        sp.add_argument(
            "--allow-out-of-range",
            action="store_true",
            help="permit task ranges beyond the published defaults",
        )
        sp.add_argument("--threads", type=int, default=0, help="worker cap (wall-clock only)")
        sp.add_argument("--out", default=None, help="run directory (default: auto)")
        if repr_flags:
            sp.add_argument("--repr", choices=["rgb", "diff", "binary"], help="tactile representation")
            sp.add_argument("--aug", choices=["true", "false"], help="training augmentation")
            sp.add_argument(
                "--obs", choices=["tactile", "oracle", "proprio"], help="observation mode"
            )

    sp = sub.add_parser("train", help="train a PPO policy")
    common(sp)
    sp.add_argument("--seeds", help="comma list of training seeds")
    sp.add_argument("--resume", help="checkpoint to resume from")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--ckpt", help="policy checkpoint")
    sp.add_argument("--policy", choices=["net", "pca"], default="net")
    sp.add_argument("--oracle-ckpt", help="oracle policy driven by the PCA estimate")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("shift-eval", help="domain-shift robustness suite")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.set_defaults(fn=cmd_shift_eval)

    sp = sub.add_parser("gridsearch-phi", help="tune the binarization threshold")
    common(sp)
    sp.add_argument("--candidates", help="comma list of thresholds")
    sp.add_argument("--frames", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gridsearch_phi)

    sp = sub.add_parser("render-demo", help="write demo tactile frames")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--steps", type=int, default=20)
    sp.set_defaults(fn=cmd_render_demo)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--channels", type=int, default=1, choices=[0, 1, 3])
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--max-elems", type=int, default=None, help="probe limit per tensor")
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("ablate", help="representation x augmentation sweep")
    common(sp)
    sp.add_argument("--seeds", type=int, default=3, help="number of seeds per cell")
    sp.add_argument(
        "--aug-sweep", choices=["on", "off", "both"], default="off", dest="aug_sweep"
    )
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("plot", help="training-curve SVG from a metrics CSV")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ppo.CheckpointError, OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
