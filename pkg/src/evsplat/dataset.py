"""Synthetic dataset generation and on-disk layout.

A scene config (JSON) describes ground-truth Gaussians, a camera rig, a shake
trajectory and the event model. `generate_dataset` renders each view along its
trajectory, averages the frames into the observed blurry frame, synthesizes
the ideal event stream, and writes everything plus a manifest:

    manifest.json                 dataset description + ground-truth positions
    poses.json                    base camera pose per view
    blur_0000.png                 observed blurry frame (sRGB PNG)
    events_0000.evt               EVT1 event stream
    gt_sharp_0000_0.png ...       ground-truth latent sharp frames, steps 0..b

With float dumps enabled every image is also stored as a float16 .npy next to
the PNG, and loaders prefer it (PNG stays for inspection).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import (
    CameraView,
    ConfigError,
    DataError,
    Gaussian,
    GaussianCloud,
    load_png,
    load_raw,
    look_at_view,
    quat_from_axis_angle,
    quat_slerp,
    save_png,
    save_raw,
)
from .event_sim import (
    ShakeTrajectory,
    bin_events,
    read_evt,
    render_sharp_sequence,
    synthesize_blur,
    synthesize_events,
    write_events_csv,
    write_evt,
)
from .trainer import HoldoutBundle, ViewBundle

MANIFEST_VERSION = 1
SCENE_CONFIG_VERSION = 1


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"config field {path!r}: {msg}")


def load_scene_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    except OSError as e:
        raise ConfigError(f"cannot read scene config {path}: {e}")
    return validate_scene_config(cfg)


def validate_scene_config(cfg: dict) -> dict:
    _require(isinstance(cfg, dict), "$", "must be a JSON object")
    _require(cfg.get("version") == SCENE_CONFIG_VERSION, "version",
             f"must be {SCENE_CONFIG_VERSION}")
    out = {
        "version": SCENE_CONFIG_VERSION,
        "seed": int(cfg.get("seed", 0)),
        "resolution": cfg.get("resolution", [64, 64]),
        "background": cfg.get("background", [0.0, 0.0, 0.0]),
        "focal": float(cfg.get("focal", 80.0)),
        "gaussians": cfg.get("gaussians", {"mode": "random", "count": 50}),
        "views": cfg.get("views", {"count": 8, "holdout": 2}),
        "trajectory": cfg.get("trajectory", {}),
        "events": cfg.get("events", {}),
    }
    res = out["resolution"]
    _require(isinstance(res, (list, tuple)) and len(res) == 2, "resolution", "must be [W, H]")
    _require(int(res[0]) >= 8 and int(res[1]) >= 8, "resolution", "must be at least 8x8")
    out["resolution"] = [int(res[0]), int(res[1])]
    _require(len(out["background"]) == 3, "background", "must be an RGB triple")
    _require(out["focal"] > 0, "focal", "must be positive")

    g = out["gaussians"]
    mode = g.get("mode", "random")
    _require(mode in ("random", "list"), "gaussians.mode", "must be 'random' or 'list'")
    if mode == "random":
        _require(int(g.get("count", 0)) >= 1, "gaussians.count", "must be >= 1")
    else:
        _require(len(g.get("items", [])) >= 1, "gaussians.items", "must be nonempty")

    v = out["views"]
    _require(int(v.get("count", 0)) >= 1, "views.count", "must be >= 1")
    _require(0 <= int(v.get("holdout", 0)) < int(v["count"]), "views.holdout",
             "must leave at least one training view")

    t = out["trajectory"]
    t.setdefault("bins", 4)
    t.setdefault("exposure", 0.1)
    t.setdefault("rotation_deg", 0.8)
    t.setdefault("translation", 0.03)
    t.setdefault("substeps", 1)
    _require(int(t["bins"]) >= 1, "trajectory.bins", "must be >= 1")
    _require(float(t["exposure"]) > 0, "trajectory.exposure", "must be positive")
    _require(int(t["substeps"]) >= 1, "trajectory.substeps", "must be >= 1")

    e = out["events"]
    e.setdefault("theta", 0.25)
    e.setdefault("noise", 0.0)
    _require(float(e["theta"]) > 0, "events.theta", "must be positive")
    _require(float(e["noise"]) >= 0, "events.noise", "must be nonnegative")
    return out


# ---------------------------------------------------------------------------
# scene / rig construction


def build_scene(cfg: dict, rng: np.random.Generator) -> GaussianCloud:
    g = cfg["gaussians"]
    if g.get("mode", "random") == "list":
        return GaussianCloud.from_gaussians(
            [
                Gaussian(
                    position=item["position"],
                    rotation=item.get("rotation", [1.0, 0.0, 0.0, 0.0]),
                    scale=item["scale"],
                    opacity=item["opacity"],
                    color=item["color"],
                )
                for item in g["items"]
            ]
        )

    count = int(g["count"])
    bounds = g.get("bounds", [[-0.7, -0.7, -0.3], [0.7, 0.7, 0.3]])
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    scale_range = g.get("scale_range", [0.04, 0.1])
    opacity_range = g.get("opacity_range", [0.5, 0.9])
    color_max = float(g.get("color_max", 0.9))

    gaussians = []
    for _ in range(count):
        axis = rng.normal(size=3)
        gaussians.append(
            Gaussian(
                position=rng.uniform(lo, hi),
                rotation=quat_from_axis_angle(axis, rng.uniform(0, np.pi)),
                scale=np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), 3)),
                opacity=float(rng.uniform(*opacity_range)),
                color=rng.uniform(0.05, color_max, 3),
            )
        )
    return GaussianCloud.from_gaussians(gaussians)


def make_views(cfg: dict):
    """Evenly spaced orbit rig looking at the origin."""
    v = cfg["views"]
    count = int(v["count"])
    radius = float(v.get("radius", 3.0))
    elev = np.deg2rad(float(v.get("elevation_deg", 20.0)))
    W, H = cfg["resolution"]
    views = []
    for i in range(count):
        az = 2 * np.pi * i / count
        eye = radius * np.array([np.cos(az) * np.cos(elev), np.sin(az) * np.cos(elev), np.sin(elev)])
        views.append(look_at_view(eye, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], cfg["focal"], (W, H)))
    return views


def make_trajectory(view: CameraView, cfg: dict, rng: np.random.Generator) -> ShakeTrajectory:
    """Linear camera-frame shake: identity at step 0 ramping to a random end
    offset at step b. Sampled per view."""
    t = cfg["trajectory"]
    b = int(t["bins"])
    rot_amp = np.deg2rad(float(t["rotation_deg"]))
    trans_amp = float(t["translation"])

    axis = rng.normal(size=3)
    angle = rot_amp * rng.uniform(0.7, 1.3) * rng.choice([-1.0, 1.0])
    q_end = quat_from_axis_angle(axis, angle)
    direction = rng.normal(size=3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    t_end = trans_amp * rng.uniform(0.7, 1.3) * direction

    identity = np.array([1.0, 0.0, 0.0, 0.0])
    rots = [quat_slerp(identity, q_end, k / b) for k in range(b + 1)]
    trans = [k / b * t_end for k in range(b + 1)]
    return ShakeTrajectory(
        base_view=view,
        rot_offsets=np.stack(rots),
        trans_offsets=np.stack(trans),
        exposure=float(t["exposure"]),
    )


# ---------------------------------------------------------------------------
# generation


def _save_image(out_dir, name, img, float_dumps):
    save_png(os.path.join(out_dir, name + ".png"), img)
    if float_dumps:
        save_raw(os.path.join(out_dir, name + ".npy"), img)


def generate_dataset(cfg: dict, out_dir, float_dumps: bool = False,
                     csv_events: bool = False) -> dict:
    """Render, blur, and eventify every view; returns the manifest dict."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])

    scene = build_scene(cfg, rng)
    views = make_views(cfg)
    holdout = int(cfg["views"].get("holdout", 0))
    b = int(cfg["trajectory"]["bins"])
    substeps = int(cfg["trajectory"]["substeps"])
    theta = float(cfg["events"]["theta"])
    noise = float(cfg["events"]["noise"])
    background = np.asarray(cfg["background"], dtype=np.float64)

    manifest_views = []
    poses = []
    for i, view in enumerate(views):
        traj = make_trajectory(view, cfg, rng)
        frames, times = render_sharp_sequence(scene, traj, background, substeps)
        blur = synthesize_blur(frames)
        stream = synthesize_events(frames, times, theta, noise_sigma=noise, rng=rng)

        tag = f"{i:04d}"
        _save_image(out_dir, f"blur_{tag}", blur, float_dumps)
        write_evt(os.path.join(out_dir, f"events_{tag}.evt"), stream)
        if csv_events:
            write_events_csv(os.path.join(out_dir, f"events_{tag}.csv"), stream)

        gt_names = []
        for k in range(b + 1):
            name = f"gt_sharp_{tag}_{k}"
            _save_image(out_dir, name, frames[k * substeps], float_dumps)
            gt_names.append(name + ".png")

        role = "holdout" if i >= len(views) - holdout else "train"
        manifest_views.append(
            {
                "id": i,
                "role": role,
                "blur": f"blur_{tag}.png",
                "events": f"events_{tag}.evt",
                "gt_sharp": gt_names,
                "num_events": len(stream),
            }
        )
        poses.append(
            {
                "id": i,
                "rotation": list(view.rotation),
                "translation": list(view.translation),
                "focal": list(view.focal),
                "principal_point": list(view.principal_point),
                "resolution": list(view.resolution),
            }
        )

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg["seed"],
        "resolution": cfg["resolution"],
        "background": list(map(float, cfg["background"])),
        "bins": b,
        "theta": theta,
        "exposure": float(cfg["trajectory"]["exposure"]),
        "float_dumps": bool(float_dumps),
        "views": manifest_views,
        "gt_positions": scene.positions.tolist(),
        "scene_config": cfg,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "poses.json"), "w") as f:
        json.dump(poses, f, indent=1, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# loading


@dataclass
class Dataset:
    train: list               # ViewBundle
    holdout: list             # HoldoutBundle
    num_bins: int
    theta: float
    background: np.ndarray
    resolution: tuple
    gt_positions: np.ndarray
    exposure: float


def _load_image(dataset_dir, png_name, float_dumps):
    if float_dumps:
        raw = os.path.join(dataset_dir, png_name.replace(".png", ".npy"))
        if os.path.exists(raw):
            return load_raw(raw)
    return load_png(os.path.join(dataset_dir, png_name))


def load_poses(path):
    with open(path) as f:
        entries = json.load(f)
    return [
        CameraView(
            rotation=np.asarray(e["rotation"]),
            translation=np.asarray(e["translation"]),
            focal=tuple(e["focal"]),
            principal_point=tuple(e["principal_point"]),
            resolution=tuple(int(x) for x in e["resolution"]),
        )
        for e in entries
    ]


def load_dataset(dataset_dir) -> Dataset:
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"no manifest.json in {dataset_dir}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    if manifest.get("version") != MANIFEST_VERSION:
        raise DataError(f"unsupported manifest version {manifest.get('version')!r}")

    poses = load_poses(os.path.join(dataset_dir, "poses.json"))
    b = int(manifest["bins"])
    theta = float(manifest["theta"])
    exposure = float(manifest["exposure"])
    float_dumps = bool(manifest.get("float_dumps", False))

    train, holdout = [], []
    for entry in manifest["views"]:
        pose = poses[entry["id"]]
        if entry["role"] == "train":
            blur = _load_image(dataset_dir, entry["blur"], float_dumps)
            stream = read_evt(os.path.join(dataset_dir, entry["events"]))
            bins = bin_events(stream, (0.0, exposure), b)
            train.append(ViewBundle(entry["id"], blur, bins, pose, theta))
        else:
            gt = _load_image(dataset_dir, entry["gt_sharp"][0], float_dumps)
            holdout.append(HoldoutBundle(entry["id"], pose, gt))

    return Dataset(
        train=train,
        holdout=holdout,
        num_bins=b,
        theta=theta,
        background=np.asarray(manifest["background"], dtype=np.float64),
        resolution=tuple(manifest["resolution"]),
        gt_positions=np.asarray(manifest["gt_positions"], dtype=np.float64),
        exposure=exposure,
    )
