"""Command-line entry point.

Subcommands: simulate | edi | train | render | eval. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import dataset as ds
from . import edi as edi_mod
from . import losses, metrics, rasterizer, trainer
from .core import ConfigError, DataError, NumericalError, load_png, save_png, save_raw
from .event_sim import bin_events, read_evt

logger = logging.getLogger("evsplat")


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="numba thread budget")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evsplat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic blur+events dataset")
    p.add_argument("--config", required=True, help="scene config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--float16", action="store_true", help="also write float16 .npy dumps")
    p.add_argument("--csv-events", action="store_true", help="also write event CSVs")
    _add_common(p)

    p = sub.add_parser("edi", help="recover latent sharp frames from blur + events")
    p.add_argument("--blur", required=True)
    p.add_argument("--events", required=True, help="EVT1 event file")
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--calibrate", default=None,
                   help="comma-separated threshold grid to search instead of --theta")
    p.add_argument("--window", type=float, nargs=2, default=None,
                   help="integration window t0 t1 (default: 0 to last event)")
    p.add_argument("--out", required=True)
    p.add_argument("--float16", action="store_true")
    _add_common(p)

    p = sub.add_parser("train", help="optimize a Gaussian scene on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None, help="training config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--no-ade", action="store_true", help="disable the deviation estimator")
    p.add_argument("--no-event-loss", action="store_true", help="drop the event term")
    p.add_argument("--lambda-event", type=float, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    _add_common(p)

    p = sub.add_parser("render", help="forward-only renders from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--poses", required=True, help="poses.json")
    p.add_argument("--out", required=True)
    p.add_argument("--background", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--float16", action="store_true")
    _add_common(p)

    p = sub.add_parser("eval", help="PSNR/SSIM of renders against ground truth")
    p.add_argument("--renders", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="output CSV")
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = ds.load_scene_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    manifest = ds.generate_dataset(cfg, args.out, float_dumps=args.float16,
                                   csv_events=args.csv_events)
    n_train = sum(1 for v in manifest["views"] if v["role"] == "train")
    print(f"wrote {len(manifest['views'])} views ({n_train} train) to {args.out}")
    return 0


def cmd_edi(args) -> int:
    blur = load_png(args.blur)
    stream = read_evt(args.events)
    if args.window is not None:
        window = (args.window[0], args.window[1])
    else:
        t_end = float(stream.t[-1]) if len(stream) else 1.0
        window = (0.0, t_end)
    bins = bin_events(stream, window, args.bins)

    if args.calibrate is not None:
        grid = [float(x) for x in args.calibrate.split(",") if x.strip()]
        theta = edi_mod.calibrate_theta(blur, bins, grid)
    elif args.theta is not None:
        theta = args.theta
    else:
        theta = edi_mod.DEFAULT_THETA

    result = edi_mod.edi_deblur(blur, bins, theta)
    os.makedirs(args.out, exist_ok=True)
    names = []
    for k, latent in enumerate(result.latents):
        name = f"latent_{k}.png"
        save_png(os.path.join(args.out, name), latent)
        if args.float16:
            save_raw(os.path.join(args.out, f"latent_{k}.npy"), latent)
        names.append(name)

    residual = float(np.abs(losses.average_latents(result.latents) - blur).max())
    report = {"theta": theta, "mean_identity_residual": residual, "latents": names}
    with open(os.path.join(args.out, "edi_report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    print(f"theta={theta!r} identity_residual={residual:.3e} -> {args.out}")
    return 0


def _train_config_from(args, data) -> trainer.TrainConfig:
    raw = {}
    if args.config:
        try:
            with open(args.config) as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: invalid JSON at line {e.lineno}: {e.msg}")

    def sub(cls, key):
        return cls(**raw.get(key, {}))

    cfg = trainer.TrainConfig(
        iterations=raw.get("iterations", 2000),
        lr=sub(trainer.LearningRates, "lr"),
        weights=losses.LossWeights(**raw.get("weights", {})),
        lambda_p=raw.get("lambda_p", trainer.TrainConfig.lambda_p),
        densify=sub(trainer.DensifyConfig, "densify"),
        init=sub(trainer.InitConfig, "init"),
        pose_noise=sub(trainer.PoseNoiseConfig, "pose_noise"),
        seed=raw.get("seed", 0),
        use_ade=raw.get("use_ade", True),
        shuffle_views=raw.get("shuffle_views", False),
        holdout_every=raw.get("holdout_every", 100),
        background=tuple(data.background),
    )
    if args.iterations is not None:
        cfg.iterations = args.iterations
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_ade:
        cfg.use_ade = False
    if args.no_event_loss:
        cfg.weights.lambda_event = 0.0
    if args.lambda_event is not None:
        cfg.weights.lambda_event = args.lambda_event
    return cfg


def cmd_train(args) -> int:
    data = ds.load_dataset(args.dataset)
    config = _train_config_from(args, data)
    os.makedirs(args.out, exist_ok=True)

    cloud = net = state = None
    if args.resume:
        cloud, net, state = trainer.load_checkpoint(args.resume)

    result = trainer.train(
        data.train, data.holdout, num_latents=data.num_bins, config=config,
        gt_positions=data.gt_positions,
        bounds=(data.gt_positions.min(0), data.gt_positions.max(0)),
        cloud=cloud, net=net, state=state,
    )

    ckpt_path = os.path.join(args.out, "checkpoint.evck")
    trainer.save_checkpoint(ckpt_path, result.cloud, result.net, result.state)
    log_path = os.path.join(args.out, "train_log.csv")
    with open(log_path, "w") as f:
        f.write("iteration,loss,loss_blur,loss_event,holdout_psnr\n")
        for it, total, lb, le, pv in result.log_rows:
            p = "" if pv is None else repr(pv)
            f.write(f"{it},{total!r},{lb!r},{le!r},{p}\n")

    rows = []
    for h in data.holdout:
        img, _ = rasterizer.forward(result.cloud, h.pose, config.background)
        img = np.clip(img, 0.0, 1.0)
        rows.append((h.view_id, metrics.psnr(img, h.gt_sharp).value, metrics.ssim(img, h.gt_sharp)))
    with open(os.path.join(args.out, "holdout_metrics.csv"), "w") as f:
        f.write("view_id,psnr,ssim\n")
        for vid, p, s in rows:
            f.write(f"{vid},{p!r},{s!r}\n")
    if rows:
        mean_p = float(np.mean([r[1] for r in rows]))
        mean_s = float(np.mean([r[2] for r in rows]))
        print(f"final holdout: psnr={mean_p:.2f} dB ssim={mean_s:.4f} over {len(rows)} views")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_render(args) -> int:
    cloud, _net, _state = trainer.load_checkpoint(args.checkpoint)
    poses = ds.load_poses(args.poses)
    os.makedirs(args.out, exist_ok=True)
    for i, pose in enumerate(poses):
        img, _ = rasterizer.forward(cloud, pose, args.background)
        img = np.clip(img, 0.0, 1.0)
        save_png(os.path.join(args.out, f"render_{i:04d}.png"), img)
        if args.float16:
            save_raw(os.path.join(args.out, f"render_{i:04d}.npy"), img)
    print(f"rendered {len(poses)} views to {args.out}")
    return 0


def _image_files(directory):
    names = sorted(n for n in os.listdir(directory) if n.endswith(".png"))
    if not names:
        raise DataError(f"no PNG images in {directory}")
    return names


def cmd_eval(args) -> int:
    render_names = _image_files(args.renders)
    gt_names = _image_files(args.gt)
    if len(render_names) != len(gt_names):
        raise DataError(
            f"render/gt count mismatch: {len(render_names)} vs {len(gt_names)}"
        )
    rows = []
    for i, (rn, gn) in enumerate(zip(render_names, gt_names)):
        a = load_png(os.path.join(args.renders, rn))
        b = load_png(os.path.join(args.gt, gn))
        rows.append((i, metrics.psnr(a, b).value, metrics.ssim(a, b)))
    with open(args.out, "w") as f:
        f.write("view_id,psnr,ssim\n")
        for vid, p, s in rows:
            f.write(f"{vid},{p!r},{s!r}\n")
    print(f"mean psnr={np.mean([r[1] for r in rows]):.4f} "
          f"mean ssim={np.mean([r[2] for r in rows]):.6f} ({len(rows)} views)")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except ImportError:
            pass

    handlers = {
        "simulate": cmd_simulate,
        "edi": cmd_edi,
        "train": cmd_train,
        "render": cmd_render,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
