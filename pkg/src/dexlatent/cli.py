"""Command-line surface: train, eval, retarget, inspect, sample.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All commands are
deterministic given the same flags, files, and seeds; file writes are atomic
(temp file + rename) so interrupted runs never leave truncated outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .fileio import atomic_write_text
from .hands import HandSpecError, load_hand_spec
from .losses import LossWeights
from .metrics import MetricsConfig, full_report, report_records, report_text
from .model import CheckpointError, UnknownHandError, load_checkpoint, save_checkpoint
from .trajectory import Trajectory, TrajectoryError, load_trajectory, save_trajectory
from .training import TrainConfig, TrainingDivergedError, train


def _parse_hidden(text):
    text = text.strip()
    if not text:
        return ()
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}, expected e.g. 128,64")
    if any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError("hidden sizes must be positive")
    return sizes


def _load_hands(paths):
    specs = []
    for path in paths:
        specs.append(load_hand_spec(path))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise HandSpecError(f"duplicate hand names in --hands: {names}")
    return specs


def _sibling(path, suffix):
    return os.path.splitext(os.fspath(path))[0] + suffix


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


def cmd_train(args):
    specs = _load_hands(args.hands)
    weights = LossWeights(
        beta=args.beta,
        lambda_dis=args.lambda_dis,
        lambda_dir=args.lambda_dir,
        lambda_dis_exp=args.lambda_dis_exp,
        recon_weight=args.recon_weight,
    )
    config = TrainConfig(
        steps=args.steps,
        batch_per_hand=args.batch_per_hand,
        learning_rate=args.lr,
        weights=weights,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        latent_dim=args.latent_dim,
        hidden_sizes=args.hidden,
    )
    model, log = train(specs, config, checkpoint_path=args.out)
    save_checkpoint(model, args.out)
    log_path = _sibling(args.out, ".log.tsv")
    rows = ["step\trecon\tretarget\tkl\ttotal"]
    for r in log.records():
        rows.append(
            "\t".join(
                [str(r["step"])]
                + [_fmt(r[k]) for k in ("recon", "retarget", "kl", "total")]
            )
        )
    atomic_write_text(log_path, "\n".join(rows) + "\n")
    outputs = [args.out, log_path]
    if not args.no_figures:
        from .plotting import save_loss_curves

        fig_path = _sibling(args.out, ".losses.png")
        save_loss_curves(log.records(), fig_path)
        outputs.append(fig_path)
    final = log.history[-1]
    print(
        f"trained {len(specs)} hands for {config.steps} steps "
        f"(final total loss {final.total:.6g})"
    )
    for path in outputs:
        print(f"wrote {path}")
    return 0


def cmd_eval(args):
    specs = _load_hands(args.hands)
    model = load_checkpoint(args.ckpt, specs=specs)
    config = MetricsConfig(
        samples=args.samples,
        interp_steps=args.interp_steps,
        epsilon=args.epsilon,
        seed=args.seed,
    )
    report = full_report(model, specs, config)
    atomic_write_text(args.out, report_text(report))
    tsv_path = _sibling(args.out, ".tsv")
    rows = [f"{key}\t{_fmt(value)}" for key, value in report_records(report)]
    atomic_write_text(tsv_path, "\n".join(rows) + "\n")
    outputs = [args.out, tsv_path]
    if not args.no_figures:
        from .plotting import save_metrics_chart

        fig_path = _sibling(args.out, ".png")
        save_metrics_chart(report, fig_path)
        outputs.append(fig_path)
    sys.stdout.write(report_text(report))
    for path in outputs:
        print(f"wrote {path}")
    return 0


def cmd_retarget(args):
    model = load_checkpoint(args.ckpt)
    traj = load_trajectory(args.input)
    if traj.hand != args.source:
        raise TrajectoryError(
            f"trajectory is for hand {traj.hand!r} but --source is {args.source!r}"
        )
    src_head = model.head(args.source)
    model.head(args.target)
    if traj.dof != src_head.dof:
        raise TrajectoryError(
            f"trajectory frames have {traj.dof} values, "
            f"head {args.source!r} expects {src_head.dof}"
        )
    lim = src_head.limits
    if np.any(traj.frames < lim[:, 0]) or np.any(traj.frames > lim[:, 1]):
        raise TrajectoryError(f"input frames violate {args.source!r} joint limits")
    codes = model.encode_batch(args.source, traj.frames)
    frames = model.decode_batch(args.target, codes)
    save_trajectory(Trajectory(args.target, traj.rate_hz, frames), args.out)
    print(f"retargeted {len(traj)} frames {args.source} -> {args.target}")
    print(f"wrote {args.out}")
    return 0


def cmd_inspect(args):
    with open(args.path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{args.path}: not a JSON document: {e}") from None
    if isinstance(doc, dict) and "format_version" in doc:
        model = load_checkpoint(args.path)
        hands = ", ".join(model.hand_names())
        hidden = ",".join(str(h) for h in model.hidden_sizes)
        print(f"checkpoint: hands [{hands}]")
        print(
            f"latent_dim {model.latent_dim}, hidden {hidden}, "
            f"parameters {model.parameter_count()}"
        )
        for name, head in model.heads.items():
            print(f"  {name}: dof {head.dof}")
    else:
        spec = load_hand_spec(args.path)
        print(
            f"hand {spec.name}: fingers {len(spec.digits)}, "
            f"dof {len(spec.joints)} (actuated {spec.actuated_dof}, "
            f"mimic {spec.mimic_count})"
        )
        for j in spec.joints:
            kind = "actuated" if j.actuated else f"mimic of {j.mimic.source}"
            print(
                f"  {j.name}: limits [{j.limits[0]:g}, {j.limits[1]:g}] ({kind})"
            )
    return 0


def cmd_sample(args):
    spec = load_hand_spec(args.hand)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x514D]))
    lim = spec.actuated_limits
    frames = rng.uniform(lim[:, 0], lim[:, 1], size=(args.frames, spec.actuated_dof))
    save_trajectory(Trajectory(spec.name, args.rate_hz, frames), args.out)
    print(f"sampled {args.frames} frames for {spec.name}")
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dexlatent",
        description="Shared latent action space for dexterous hands: "
        "train, evaluate, and retarget joint trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the latent space on hand specs")
    p.add_argument("--hands", nargs="+", required=True, metavar="SPEC.json")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--batch-per-hand", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--hidden", type=_parse_hidden, default=(128, 64), metavar="128,64")
    p.add_argument("--beta", type=float, default=1e-5)
    p.add_argument("--lambda-dis", type=float, default=2000.0)
    p.add_argument("--lambda-dir", type=float, default=5.0)
    p.add_argument("--lambda-dis-exp", type=float, default=12.0)
    p.add_argument("--recon-weight", type=float, default=1.0)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write the metric report for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--hands", nargs="+", required=True, metavar="SPEC.json")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--interp-steps", type=int, default=32)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retarget", help="retarget a trajectory between hands")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--input", required=True, help="source trajectory file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("inspect", help="summarize a hand spec or checkpoint")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sample", help="emit random in-limit poses for a hand")
    p.add_argument("--hand", required=True, metavar="SPEC.json")
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--rate-hz", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (
        HandSpecError,
        CheckpointError,
        TrajectoryError,
        TrainingDivergedError,
        UnknownHandError,
        ValueError,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
