"""End-to-end optimization loop.

Each iteration: pick the next training view (round-robin), estimate per-latent
Gaussian deviations, render the base view plus one image per latent, average
them into an estimated blurry frame, evaluate the blurriness and event losses,
backpropagate through the rasterizer and the deviation MLP, and apply one Adam
step per parameter group. Densify/prune runs on a fixed interval schedule.

Everything is float64 and deterministic under a fixed seed: view order,
initialization, pose noise, and densification randomness all derive from the
config seed, and checkpoints capture the complete optimizer and RNG state.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import ade, losses, metrics, rasterizer
from .core import (
    CameraView,
    DataError,
    GaussianCloud,
    NumericalError,
    inverse_sigmoid,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_to_rotmat,
)
from .event_sim import EventBins
from .losses import EventMaps, LossWeights

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_GROUPS = ("position", "rotation", "log_scale", "opacity_logit", "color")
OPACITY_LOGIT_LIMIT = 15.0


@dataclass
class LearningRates:
    position: float = 1.6e-4
    rotation: float = 1e-3
    log_scale: float = 5e-3
    opacity_logit: float = 5e-2
    color: float = 2.5e-3
    mlp: float = 1e-4


@dataclass
class DensifyConfig:
    enabled: bool = True
    interval: int = 200
    start: int = 200
    stop: int = 1500
    grad_threshold: float = 2e-3
    opacity_prune: float = 0.005


@dataclass
class InitConfig:
    mode: str = "simulator"        # "simulator" (perturbed GT points) or "random"
    count: int = 100               # random-mode point count
    noise: float = 0.02            # world-unit jitter on ground-truth points


@dataclass
class PoseNoiseConfig:
    enabled: bool = False
    rotation_deg: float = 0.5      # COLMAP-like rotation error, degrees
    translation_frac: float = 0.005  # translation error as a fraction of scene extent


@dataclass
class TrainConfig:
    iterations: int = 2000
    lr: LearningRates = field(default_factory=LearningRates)
    weights: LossWeights = field(default_factory=LossWeights)
    lambda_p: float = ade.DEFAULT_DEVIATION_SCALE
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    init: InitConfig = field(default_factory=InitConfig)
    pose_noise: PoseNoiseConfig = field(default_factory=PoseNoiseConfig)
    seed: int = 0
    use_ade: bool = True
    shuffle_views: bool = False
    holdout_every: int = 100
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")
        for name in (*PARAM_GROUPS, "mlp"):
            if getattr(self.lr, name) <= 0:
                raise DataError(f"learning rate for {name} must be positive")
        if self.holdout_every < 1:
            raise DataError("holdout_every must be >= 1")


@dataclass
class ViewBundle:
    """One training view: observed blurry frame, its event bins, the base pose."""

    view_id: int
    blur: np.ndarray
    bins: EventBins
    pose: CameraView
    theta: float


@dataclass
class HoldoutBundle:
    view_id: int
    pose: CameraView
    gt_sharp: np.ndarray


@dataclass
class AdamSlot:
    m: np.ndarray
    v: np.ndarray


@dataclass
class TrainState:
    iteration: int
    moments: dict                 # group name -> AdamSlot
    mlp_moments: AdamSlot
    accum_grad: np.ndarray        # per-Gaussian accumulated position-grad norm
    accum_count: np.ndarray
    rng: np.random.Generator
    view_cursor: int = 0
    scene_extent: float = 1.0
    view_order: np.ndarray | None = None


def init_state(cloud: GaussianCloud, net: ade.AdeNetwork, config: TrainConfig) -> TrainState:
    n = len(cloud)
    moments = {
        "position": AdamSlot(np.zeros((n, 3)), np.zeros((n, 3))),
        "rotation": AdamSlot(np.zeros((n, 4)), np.zeros((n, 4))),
        "log_scale": AdamSlot(np.zeros((n, 3)), np.zeros((n, 3))),
        "opacity_logit": AdamSlot(np.zeros(n), np.zeros(n)),
        "color": AdamSlot(np.zeros((n, 3)), np.zeros((n, 3))),
    }
    extent = 1.0
    if n > 1:
        extent = max(float(np.linalg.norm(cloud.positions.max(0) - cloud.positions.min(0))), 1e-6)
    return TrainState(
        iteration=0,
        moments=moments,
        mlp_moments=AdamSlot(np.zeros(net.num_params), np.zeros(net.num_params)),
        accum_grad=np.zeros(n),
        accum_count=np.zeros(n),
        rng=np.random.default_rng(config.seed + 1),
        scene_extent=extent,
    )


# ---------------------------------------------------------------------------
# Adam


def adam_step(params: np.ndarray, grads: np.ndarray, moments: AdamSlot, lr: float, t: int):
    """Bias-corrected Adam update; non-finite gradient slots are skipped."""
    g = np.asarray(grads, dtype=np.float64)
    bad = ~np.isfinite(g)
    if bad.any():
        logger.warning("skipping %d non-finite gradient slots", int(bad.sum()))
        g = np.where(bad, 0.0, g)

    m_new = ADAM_BETA1 * moments.m + (1 - ADAM_BETA1) * g
    v_new = ADAM_BETA2 * moments.v + (1 - ADAM_BETA2) * g * g
    m_hat = m_new / (1 - ADAM_BETA1**t)
    v_hat = v_new / (1 - ADAM_BETA2**t)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    if bad.any():
        m_new = np.where(bad, moments.m, m_new)
        v_new = np.where(bad, moments.v, v_new)
        updated = np.where(bad, params, updated)
    moments.m = m_new
    moments.v = v_new
    return updated


# ---------------------------------------------------------------------------
# one training iteration


def _render_latents(cloud, net, bundle, config):
    """Base render plus one render per deviated latent; returns images, tapes,
    deviations and the ADE tape.

    With the ADE path disabled every latent render would equal the base render,
    so the latent set collapses to the single base image (same losses and
    gradients, one rasterization)."""
    background = np.asarray(config.background, dtype=np.float64)
    base_img, base_tape = rasterizer.forward(cloud, bundle.pose, background)
    images, tapes = [base_img], [base_tape]

    devs, ade_tape = None, None
    if config.use_ade:
        devs, ade_tape = ade.ade_forward(net, cloud.positions, bundle.pose, config.lambda_p)
        for i in range(1, net.num_latents + 1):
            shifted = GaussianCloud(
                ade.apply_deviations(cloud.positions, devs, i),
                cloud.rotations, cloud.log_scales, cloud.opacity_logits, cloud.colors,
            )
            img, tape = rasterizer.forward(shifted, bundle.pose, background)
            images.append(img)
            tapes.append(tape)
    return images, tapes, devs, ade_tape


def compute_loss_and_grads(cloud: GaussianCloud, net: ade.AdeNetwork,
                           bundle: ViewBundle, config: TrainConfig):
    """Full forward + backward for one view, without touching any parameters.

    Returns (breakdown dict, RenderGrads, MLP gradient or None, per-Gaussian
    visibility mask); position gradients include both the direct path through
    the deviated renders and the encoding path through the deviation network.
    """
    images, tapes, devs, ade_tape = _render_latents(cloud, net, bundle, config)
    n_renders = len(images)

    est_blur = losses.average_latents(images)
    lb, g_est = losses.blur_loss(est_blur, bundle.blur, config.weights)

    le = 0.0
    g_first = g_last = None
    if config.weights.lambda_event > 0:
        measured = losses.measured_event_map(bundle.bins, bundle.theta)
        emap, jac_first, jac_last = losses.estimated_event_map(images[0], images[-1])
        le, g_emap = losses.event_loss(EventMaps(measured, emap))
        scale = config.weights.lambda_event
        g_first = scale * g_emap[:, :, None] * jac_first
        g_last = scale * g_emap[:, :, None] * jac_last

    total = losses.total_loss(lb, le, config.weights)

    # gradient on every latent render: blur loss distributes uniformly
    g_renders = [g_est / n_renders for _ in range(n_renders)]
    if g_first is not None:
        g_renders[0] = g_renders[0] + g_first
        g_renders[-1] = g_renders[-1] + g_last

    grads = rasterizer.RenderGrads(
        position=np.zeros_like(cloud.positions),
        rotation=np.zeros_like(cloud.rotations),
        log_scale=np.zeros_like(cloud.log_scales),
        opacity_logit=np.zeros_like(cloud.opacity_logits),
        color=np.zeros_like(cloud.colors),
    )
    g_deviations = None
    if devs is not None:
        g_deviations = np.zeros_like(devs.deviations)

    for i, (tape, g_img) in enumerate(zip(tapes, g_renders)):
        gi = rasterizer.backward(tape, g_img)
        grads.add_(gi)
        if i > 0 and g_deviations is not None:
            g_deviations[i - 1] = config.lambda_p * gi.position

    g_mlp = None
    if ade_tape is not None:
        g_mlp, g_pos_enc = ade.ade_backward(net, ade_tape, g_deviations)
        grads.position += g_pos_enc

    seen = np.zeros(len(cloud), dtype=bool)
    for tape in tapes:
        seen[tape.order] = True
    return {"total": total, "blur": lb, "event": le}, grads, g_mlp, seen


def train_iteration(cloud: GaussianCloud, net: ade.AdeNetwork, bundle: ViewBundle,
                    state: TrainState, config: TrainConfig) -> dict:
    """Run one optimization step on one view; returns the loss breakdown."""
    breakdown, grads, g_mlp, seen = compute_loss_and_grads(cloud, net, bundle, config)
    if not np.isfinite(breakdown["total"]):
        logger.error(
            "non-finite loss at iteration %d (blur=%r event=%r); parameter stats: "
            "|pos|max=%g |logscale|max=%g |logit|max=%g",
            state.iteration, breakdown["blur"], breakdown["event"],
            float(np.abs(cloud.positions).max(initial=0)),
            float(np.abs(cloud.log_scales).max(initial=0)),
            float(np.abs(cloud.opacity_logits).max(initial=0)),
        )
        raise NumericalError(f"non-finite loss at iteration {state.iteration}")

    t = state.iteration + 1
    cloud.positions = adam_step(cloud.positions, grads.position, state.moments["position"], config.lr.position, t)
    cloud.rotations = adam_step(cloud.rotations, grads.rotation, state.moments["rotation"], config.lr.rotation, t)
    cloud.log_scales = adam_step(cloud.log_scales, grads.log_scale, state.moments["log_scale"], config.lr.log_scale, t)
    cloud.opacity_logits = adam_step(
        cloud.opacity_logits, grads.opacity_logit, state.moments["opacity_logit"], config.lr.opacity_logit, t
    )
    cloud.colors = adam_step(cloud.colors, grads.color, state.moments["color"], config.lr.color, t)
    if g_mlp is not None:
        net.params[...] = adam_step(net.params, g_mlp, state.mlp_moments, config.lr.mlp, t)

    # restore the hard invariants the reparameterizations do not cover
    cloud.rotations = quat_normalize(cloud.rotations)
    cloud.colors = np.clip(cloud.colors, 0.0, 1.0)
    cloud.opacity_logits = np.clip(cloud.opacity_logits, -OPACITY_LOGIT_LIMIT, OPACITY_LOGIT_LIMIT)

    norms = np.linalg.norm(grads.position, axis=1)
    state.accum_grad[seen] += norms[seen]
    state.accum_count[seen] += 1

    state.iteration = t
    return breakdown


# ---------------------------------------------------------------------------
# densify / prune


def densify_and_prune(cloud: GaussianCloud, state: TrainState, config: TrainConfig) -> GaussianCloud:
    """Clone (or split) high-gradient Gaussians, prune near-transparent ones."""
    dens = config.densify
    avg = state.accum_grad / np.maximum(state.accum_count, 1.0)
    grow = avg > dens.grad_threshold

    scales = cloud.scales
    split = grow & (scales.max(axis=1) > 0.01 * state.scene_extent)
    clone = grow & ~split

    new_rows = {k: [] for k in ("positions", "rotations", "log_scales", "opacity_logits", "colors")}

    def append_row(i, position, log_scale):
        new_rows["positions"].append(position)
        new_rows["rotations"].append(cloud.rotations[i])
        new_rows["log_scales"].append(log_scale)
        new_rows["opacity_logits"].append(cloud.opacity_logits[i])
        new_rows["colors"].append(cloud.colors[i])

    for i in np.nonzero(clone)[0]:
        jitter = state.rng.normal(0.0, 0.1 * scales[i])
        append_row(i, cloud.positions[i] + jitter, cloud.log_scales[i])

    shrink = np.log(1.6)
    for i in np.nonzero(split)[0]:
        R = rasterizer._batch_rotmats(cloud.rotations[i : i + 1])[0]
        sample = R @ (state.rng.normal(size=3) * scales[i])
        append_row(i, cloud.positions[i] + sample, cloud.log_scales[i] - shrink)
        cloud.log_scales[i] = cloud.log_scales[i] - shrink

    keep = cloud.opacities >= dens.opacity_prune
    if not keep.any() and not new_rows["positions"]:
        logger.warning("pruning would empty the scene; keeping the most opaque Gaussian")
        keep[int(np.argmax(cloud.opacities))] = True

    def stack(name, extra):
        base = getattr(cloud, name)[keep]
        if extra:
            return np.concatenate([base, np.stack(extra)], axis=0)
        return base

    cloud = GaussianCloud(
        stack("positions", new_rows["positions"]),
        stack("rotations", new_rows["rotations"]),
        stack("log_scales", new_rows["log_scales"]),
        stack("opacity_logits", new_rows["opacity_logits"]),
        stack("colors", new_rows["colors"]),
    )

    n_new = len(new_rows["positions"])
    for name, slot in state.moments.items():
        pad_shape = (n_new,) + slot.m.shape[1:]
        slot.m = np.concatenate([slot.m[keep], np.zeros(pad_shape)], axis=0)
        slot.v = np.concatenate([slot.v[keep], np.zeros(pad_shape)], axis=0)
    state.accum_grad = np.zeros(len(cloud))
    state.accum_count = np.zeros(len(cloud))
    return cloud


# ---------------------------------------------------------------------------
# scene initialization


def initialize_scene(views, blur_images, config: TrainConfig, rng: np.random.Generator,
                     gt_positions=None, bounds=None) -> GaussianCloud:
    """Build the starting cloud: perturbed ground-truth points (simulator mode)
    or uniform random points in a bounding box, colored from the nearest view."""
    mode = config.init.mode
    if mode == "simulator" and gt_positions is None:
        logger.warning("no ground-truth points available; falling back to random init")
        mode = "random"

    if mode == "simulator":
        positions = np.asarray(gt_positions, dtype=np.float64).copy()
        if config.init.noise > 0:
            positions += rng.normal(0.0, config.init.noise, positions.shape)
    elif mode == "random":
        if bounds is None:
            bounds = (np.full(3, -1.0), np.full(3, 1.0))
        lo, hi = np.asarray(bounds[0], dtype=np.float64), np.asarray(bounds[1], dtype=np.float64)
        positions = rng.uniform(lo, hi, (config.init.count, 3))
    else:
        raise DataError(f"unknown init mode {mode!r}")

    n = len(positions)
    if n > 1:
        tree = cKDTree(positions)
        nn_dist, _ = tree.query(positions, k=2)
        scale = float(np.mean(nn_dist[:, 1]))
    else:
        scale = 0.1
    scale = max(scale, 1e-4)

    colors = np.full((n, 3), 0.5)
    centers = np.stack([v.camera_center for v in views])
    for i in range(n):
        vi = int(np.argmin(np.linalg.norm(centers - positions[i], axis=1)))
        view, img = views[vi], blur_images[vi]
        p = view.rotmat @ positions[i] + view.translation
        if p[2] > rasterizer.NEAR_PLANE:
            px = int(round(view.focal[0] * p[0] / p[2] + view.principal_point[0]))
            py = int(round(view.focal[1] * p[1] / p[2] + view.principal_point[1]))
            h, w = img.shape[:2]
            colors[i] = img[min(max(py, 0), h - 1), min(max(px, 0), w - 1)]

    return GaussianCloud(
        positions=positions,
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        log_scales=np.full((n, 3), np.log(scale)),
        opacity_logits=np.full(n, float(inverse_sigmoid(0.1))),
        colors=np.clip(colors, 0.0, 1.0),
    )


def apply_pose_noise(views, config: TrainConfig, extent: float, rng: np.random.Generator):
    """COLMAP-like pose corruption of training views (rotation + translation)."""
    noisy = []
    rot_sigma = np.deg2rad(config.pose_noise.rotation_deg)
    trans_sigma = config.pose_noise.translation_frac * extent
    for v in views:
        axis = rng.normal(size=3)
        angle = rng.normal(0.0, rot_sigma)
        dq = quat_from_axis_angle(axis, angle)
        dt = rng.normal(0.0, trans_sigma, 3) if trans_sigma > 0 else np.zeros(3)
        noisy.append(
            CameraView(
                rotation=quat_multiply(dq, v.rotation),
                translation=quat_to_rotmat(dq) @ v.translation + dt,
                focal=v.focal,
                principal_point=v.principal_point,
                resolution=v.resolution,
            )
        )
    return noisy


# ---------------------------------------------------------------------------
# full training loop


@dataclass
class TrainResult:
    cloud: GaussianCloud
    net: ade.AdeNetwork
    state: TrainState
    log_rows: list                # (iteration, total, blur, event, psnr-or-None)


def _next_view(state: TrainState, n_views: int, config: TrainConfig) -> int:
    if not config.shuffle_views:
        idx = state.view_cursor % n_views
        state.view_cursor += 1
        return idx
    pos = state.view_cursor % n_views
    if pos == 0:
        state.view_order = state.rng.permutation(n_views)
    state.view_cursor += 1
    return int(state.view_order[pos])


def holdout_psnr(cloud: GaussianCloud, holdouts, background=(0.0, 0.0, 0.0)) -> float:
    """Mean PSNR of single-pass sharp renders against ground-truth sharp frames."""
    vals = []
    for h in holdouts:
        img, _ = rasterizer.forward(cloud, h.pose, background)
        vals.append(metrics.psnr(np.clip(img, 0.0, 1.0), h.gt_sharp).value)
    return float(np.mean(vals)) if vals else float("nan")


def train(bundles, holdouts, num_latents: int, config: TrainConfig,
          gt_positions=None, bounds=None, cloud=None, net=None, state=None,
          on_iteration=None) -> TrainResult:
    """Optimize a scene against training bundles; returns the final model.

    `cloud`/`net`/`state` may come from a checkpoint to resume a run; when
    omitted they are constructed deterministically from the config seed.
    """
    if not bundles:
        raise DataError("no training views")

    if net is None:
        net = ade.AdeNetwork(num_latents=num_latents, seed=config.seed)
    if cloud is None:
        init_rng = np.random.default_rng(config.seed)
        poses = [b.pose for b in bundles]
        blurs = [b.blur for b in bundles]
        cloud = initialize_scene(poses, blurs, config, init_rng,
                                 gt_positions=gt_positions, bounds=bounds)

    if state is None:
        state = init_state(cloud, net, config)

    if config.pose_noise.enabled:
        # dedicated stream so resumed runs rebuild the identical noisy poses
        noise_rng = np.random.default_rng(config.seed + 7919)
        noisy = apply_pose_noise([b.pose for b in bundles], config, state.scene_extent, noise_rng)
        bundles = [
            ViewBundle(b.view_id, b.blur, b.bins, pose, b.theta)
            for b, pose in zip(bundles, noisy)
        ]

    log_rows = []
    dens = config.densify
    while state.iteration < config.iterations:
        idx = _next_view(state, len(bundles), config)
        breakdown = train_iteration(cloud, net, bundles[idx], state, config)

        it = state.iteration
        psnr_val = None
        if holdouts and (it % config.holdout_every == 0 or it == config.iterations):
            psnr_val = holdout_psnr(cloud, holdouts, config.background)
        log_rows.append((it, breakdown["total"], breakdown["blur"], breakdown["event"], psnr_val))

        if (
            dens.enabled
            and dens.start <= it <= dens.stop
            and it % dens.interval == 0
        ):
            cloud = densify_and_prune(cloud, state, config)

        if on_iteration is not None:
            on_iteration(it, breakdown)

    return TrainResult(cloud=cloud, net=net, state=state, log_rows=log_rows)


# ---------------------------------------------------------------------------
# checkpoint format: single little-endian binary blob, versioned


CHECKPOINT_MAGIC = b"EVCK"
CHECKPOINT_VERSION = 1


def _write_array(f, arr):
    a = np.ascontiguousarray(arr, dtype="<f8")
    f.write(struct.pack("<I", a.ndim))
    f.write(struct.pack(f"<{a.ndim}q", *a.shape))
    f.write(a.tobytes())


def _read_array(f):
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim))
    n = int(np.prod(shape)) if ndim else 1
    return np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()


def save_checkpoint(path, cloud: GaussianCloud, net: ade.AdeNetwork, state: TrainState) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<qqqq", len(cloud), net.num_params, net.num_latents, state.iteration))
        f.write(struct.pack("<qd", state.view_cursor, state.scene_extent))

        for name in ("positions", "rotations", "log_scales", "opacity_logits", "colors"):
            _write_array(f, getattr(cloud, name))
        for name in PARAM_GROUPS:
            _write_array(f, state.moments[name].m)
            _write_array(f, state.moments[name].v)
        _write_array(f, net.params)
        _write_array(f, state.mlp_moments.m)
        _write_array(f, state.mlp_moments.v)
        _write_array(f, state.accum_grad)
        _write_array(f, state.accum_count)
        if state.view_order is None:
            _write_array(f, np.zeros(0))
        else:
            _write_array(f, state.view_order.astype(np.float64))

        rng_state = state.rng.bit_generator.state
        f.write(rng_state["state"]["state"].to_bytes(16, "little"))
        f.write(rng_state["state"]["inc"].to_bytes(16, "little"))
        f.write(struct.pack("<Iq", int(rng_state["has_uint32"]), int(rng_state["uinteger"])))


def load_checkpoint(path):
    """Returns (cloud, net, state); the network's latent count comes from the file."""
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise DataError("not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        n, n_params, num_latents, iteration = struct.unpack("<qqqq", f.read(32))
        view_cursor, scene_extent = struct.unpack("<qd", f.read(16))

        cloud = GaussianCloud(*(_read_array(f) for _ in range(5)))
        moments = {}
        for name in PARAM_GROUPS:
            moments[name] = AdamSlot(_read_array(f), _read_array(f))
        net = ade.AdeNetwork(num_latents=int(num_latents))
        params = _read_array(f)
        if len(params) != net.num_params:
            raise DataError("checkpoint MLP size does not match the architecture")
        net.params[...] = params
        mlp_moments = AdamSlot(_read_array(f), _read_array(f))
        accum_grad = _read_array(f)
        accum_count = _read_array(f)
        view_order = _read_array(f)

        rng = np.random.default_rng(0)
        st = rng.bit_generator.state
        st["state"]["state"] = int.from_bytes(f.read(16), "little")
        st["state"]["inc"] = int.from_bytes(f.read(16), "little")
        has_uint32, uinteger = struct.unpack("<Iq", f.read(12))
        st["has_uint32"] = has_uint32
        st["uinteger"] = uinteger
        rng.bit_generator.state = st

    state = TrainState(
        iteration=int(iteration),
        moments=moments,
        mlp_moments=mlp_moments,
        accum_grad=accum_grad,
        accum_count=accum_count,
        rng=rng,
        view_cursor=int(view_cursor),
        scene_extent=float(scene_extent),
        view_order=None if len(view_order) == 0 else view_order.astype(np.int64),
    )
    return cloud, net, state
