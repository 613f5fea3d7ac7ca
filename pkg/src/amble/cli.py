"""Command-line interface.

Subcommands: train, eval, crossval, plot, clips.  Exit codes: 0 on success,
2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, mocap
from . import model as mdl
from .config import load_config, save_config
from .errors import AmbleError, ClipError, ConfigError, NumericalError
from .ppo import Trainer, evaluate, load_checkpoint
from .sim.crossval import crossval_locomotion, crossval_pendulum
from .sim.env import Episode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amble",
        description="Planar biped locomotion training engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training session")
    p_train.add_argument("--config", required=True, help="training config JSON")
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
    p_train.add_argument("--out", default=None,
                         help="output directory (default runs/<config stem>)")
    p_train.add_argument("--iterations", type=int, default=None,
                         help="override the configured iteration count")
    p_train.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--steps", type=int, default=500)
    p_eval.add_argument("--envs", type=int, default=8)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--integrator", choices=["euler", "rk4"], default=None)
    p_eval.add_argument("--trajectory", default=None,
                        help="write the evaluation trajectory CSV here")

    p_cross = sub.add_parser("crossval",
                             help="run one policy under both integrators")
    p_cross.add_argument("--checkpoint", required=True)
    p_cross.add_argument("--scenario", choices=["locomotion", "pendulum"],
                         default="locomotion")
    p_cross.add_argument("--steps", type=int, default=500)
    p_cross.add_argument("--out", default=None, help="divergence CSV path")

    p_plot = sub.add_parser("plot", help="emit plot-ready data tables")
    p_plot.add_argument("--metrics", required=True,
                        help="metrics.csv from train, or a crossval CSV")
    p_plot.add_argument("--out", required=True, help="output directory")

    p_clips = sub.add_parser("clips", help="motion clip utilities")
    clip_sub = p_clips.add_subparsers(dest="clip_command", required=True)
    p_validate = clip_sub.add_parser("validate", help="check clip invariants")
    p_validate.add_argument("files", nargs="+")
    p_synth = clip_sub.add_parser("synth", help="write the synthetic gait library")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--rate", type=float, default=100.0)
    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.iterations is not None:
        cfg = replace(cfg, iterations=args.iterations)
    out_dir = args.out
    if out_dir is None:
        stem = os.path.splitext(os.path.basename(args.config))[0]
        out_dir = os.path.join("runs", stem)
    trainer = Trainer(cfg, out_dir)
    save_config(cfg, os.path.join(out_dir, "config.json"))

    def progress(row):
        if not args.quiet and (row["iteration"] % 10 == 0 or row["iteration"] == 1):
            print(f"iter {row['iteration']:5d}  return {row['mean_episode_return']:8.2f}  "
                  f"len {row['mean_episode_length']:7.1f}  "
                  f"reward/step {row['mean_step_reward']:6.3f}  "
                  f"kl {row['approx_kl']:.4f}", flush=True)

    metrics = trainer.train(progress=progress)
    print(f"metrics: {metrics}")
    print(f"final checkpoint: {trainer.checkpoint_path(cfg.iterations)}")
    return EXIT_OK


def _load_eval_inputs(checkpoint_path):
    head, value_net, disc, meta = load_checkpoint(checkpoint_path)
    from .config import config_from_dict
    cfg = config_from_dict(meta["config"])
    return head, disc, cfg


def _cmd_eval(args) -> int:
    head, disc, cfg = _load_eval_inputs(args.checkpoint)
    result = evaluate(head, disc, cfg, steps=args.steps, n_envs=args.envs,
                      seed=args.seed, integrator=args.integrator,
                      trajectory_path=args.trajectory)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_crossval(args) -> int:
    head, disc, cfg = _load_eval_inputs(args.checkpoint)
    model = mdl.load_model(cfg.model_file) if cfg.model_file \
        else mdl.build_default_model()
    if args.scenario == "pendulum":
        report = crossval_pendulum(model, dt=cfg.sim.physics_dt, horizon=1.0)
    else:
        clock = cfg.clock.template()

        def make_episode(integrator: str) -> Episode:
            sim_cfg = replace(cfg.sim, integrator=integrator, push_enabled=False)
            return Episode(model, sim_cfg, clock, cfg.rewards,
                           cfg.randomization, cfg.commands, seed=cfg.seed,
                           env_id=0, noise_scale=None)

        report = crossval_locomotion(make_episode, lambda obs: head.mean(obs),
                                     args.steps, cfg.sim.control_dt)
    out = args.out or f"crossval_{args.scenario}.csv"
    report.write_csv(out)
    print(json.dumps({
        "scenario": report.scenario,
        "steps": int(report.steps[-1]),
        "max_root_divergence_m": report.max_root,
        "max_pitch_divergence_rad": report.max_pitch,
        "max_joint_divergence_rad": report.max_joint,
        "csv": out,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_plot(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    with open(args.metrics, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = reader.fieldnames or []
    if not rows:
        raise ConfigError(f"{args.metrics}: empty metrics file")
    if "droot_x_m" in header:
        return _plot_crossval(args, rows)
    if "mean_episode_return" not in header:
        raise ConfigError(f"{args.metrics}: not a metrics or crossval CSV")
    return _plot_training(args, rows)


def _plot_training(args, rows) -> int:
    iters = np.array([int(r["iteration"]) for r in rows])
    ret = np.array([float(r["mean_episode_return"]) for r in rows])
    length = np.array([float(r["mean_episode_length"]) for r in rows])
    ret_max = max(np.abs(ret).max(), 1e-12)
    len_max = max(np.abs(length).max(), 1e-12)
    out_csv = os.path.join(args.out, "training_curves.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_episode_return",
                         "normalized_return", "mean_episode_length",
                         "normalized_episode_length"])
        for i in range(len(rows)):
            writer.writerow([int(iters[i]), repr(float(ret[i])),
                             repr(float(ret[i] / ret_max)),
                             repr(float(length[i])),
                             repr(float(length[i] / len_max))])
    meta = {
        "source": args.metrics,
        "normalization": "values divided by the run's own maximum "
                         "(normalized_return = return / max |return|)",
        "return_max": float(ret_max),
        "episode_length_max": float(len_max),
        "rows": len(rows),
    }
    with open(os.path.join(args.out, "plot_metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote {out_csv}")
    return EXIT_OK


def _plot_crossval(args, rows) -> int:
    out_csv = os.path.join(args.out, "crossval_divergence.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "root_divergence_m", "pitch_divergence_rad",
                         "joint_divergence_rad"])
        for r in rows:
            root = float(np.hypot(float(r["droot_x_m"]), float(r["droot_z_m"])))
            writer.writerow([r["time_s"], repr(root), r["dpitch_rad"],
                             r["djoint_max_rad"]])
    with open(os.path.join(args.out, "plot_metadata.json"), "w") as fh:
        json.dump({"source": args.metrics, "kind": "crossval"}, fh, indent=2,
                  sort_keys=True)
    print(f"wrote {out_csv}")
    return EXIT_OK


def _cmd_clips(args) -> int:
    if args.clip_command == "synth":
        os.makedirs(args.out, exist_ok=True)
        lib = mocap.default_library(rate=args.rate)
        for clip in lib.clips:
            path = os.path.join(args.out, f"{clip.name}.clip")
            mocap.save_clip(clip, path)
            print(f"wrote {path}")
        return EXIT_OK
    failures = 0
    for path in args.files:
        try:
            clip = mocap.load_clip(path)
        except (ClipError, OSError) as exc:
            print(f"{path}: INVALID - {exc}")
            failures += 1
            continue
        vel = np.abs(clip.joint_vel).max() if clip.joint_vel.size else 0.0
        print(f"{path}: ok  name={clip.name} frames={clip.n_frames} "
              f"rate={clip.rate:g}Hz duration={clip.duration:.3f}s "
              f"loop={clip.loop} joints={len(clip.joint_names)} "
              f"transitions={clip.n_transitions} max|qdot|={vel:.3f}")
    return EXIT_CONFIG if failures else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "crossval": _cmd_crossval,
        "plot": _cmd_plot,
        "clips": _cmd_clips,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AmbleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
