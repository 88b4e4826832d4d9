"""Adaptive deviation estimation: a small MLP that turns encoded Gaussian
positions plus an encoded camera pose into per-Gaussian position offsets, one
set per latent step. The decode layer starts at exactly zero so an untrained
network leaves the scene untouched (every latent render equals the base
render until the first optimizer step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraView, DataError, quat_normalize

HIDDEN_WIDTH = 64
POSITION_FREQUENCIES = 4
POSE_FREQUENCIES = 2
DEFAULT_DEVIATION_SCALE = 0.01


@dataclass(frozen=True)
class PositionalEncoding:
    """sin/cos frequency encoding; output dim = d * (2L + include_input)."""

    num_frequencies: int
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 1:
            raise DataError("positional encoding needs at least one frequency")

    def output_dim(self, input_dim: int) -> int:
        return input_dim * (2 * self.num_frequencies + (1 if self.include_input else 0))

    def encode(self, v: np.ndarray) -> np.ndarray:
        """Per component: [v?, sin(pi v), cos(pi v), sin(2 pi v), cos(2 pi v), ...]."""
        v = np.asarray(v, dtype=np.float64)
        parts = []
        for c in range(v.shape[-1]):
            col = v[..., c : c + 1]
            if self.include_input:
                parts.append(col)
            for k in range(self.num_frequencies):
                arg = (2.0**k) * np.pi * col
                parts.append(np.sin(arg))
                parts.append(np.cos(arg))
        return np.concatenate(parts, axis=-1)

    def encode_jacobian(self, v: np.ndarray) -> np.ndarray:
        """d(encode)/dv as per-component column derivatives, same layout as encode."""
        v = np.asarray(v, dtype=np.float64)
        parts = []
        for c in range(v.shape[-1]):
            col = v[..., c : c + 1]
            if self.include_input:
                parts.append(np.ones_like(col))
            for k in range(self.num_frequencies):
                w = (2.0**k) * np.pi
                parts.append(w * np.cos(w * col))
                parts.append(-w * np.sin(w * col))
        return np.concatenate(parts, axis=-1)


POSITION_ENCODING = PositionalEncoding(POSITION_FREQUENCIES)
POSE_ENCODING = PositionalEncoding(POSE_FREQUENCIES)


@dataclass
class DeviationSet:
    deviations: np.ndarray      # (l, N, 3) world-unit offsets
    lambda_p: float             # scale applied when offsetting positions

    @property
    def num_latents(self) -> int:
        return self.deviations.shape[0]


@dataclass
class AdeTape:
    """Forward activations needed by the analytic backward pass."""

    inputs: np.ndarray          # (N, Din)
    hidden: list                # post-ReLU activations per layer
    enc_jac: np.ndarray         # (N, 27) encoding derivative for the position block
    num_gaussians: int


class AdeNetwork:
    """Embedding layer, three hidden ReLU layers of width 64, zero-init decode.

    All weights live in one flat float64 vector; `slices` names the pieces,
    and the W*/b* attributes are views into it, so optimizer steps on
    `params` are immediately visible to the forward pass.
    """

    def __init__(self, num_latents: int, hidden: int = HIDDEN_WIDTH, seed: int = 0):
        if num_latents < 1:
            raise DataError("need at least one latent deviation set")
        self.num_latents = int(num_latents)
        self.hidden = int(hidden)
        self.input_dim = POSITION_ENCODING.output_dim(3) + POSE_ENCODING.output_dim(7)
        self.output_dim = 3 * self.num_latents

        dims = [self.input_dim, hidden, hidden, hidden, hidden, self.output_dim]
        self.slices = {}
        offset = 0
        for i in range(5):
            self.slices[f"W{i}"] = (offset, (dims[i], dims[i + 1]))
            offset += dims[i] * dims[i + 1]
            self.slices[f"b{i}"] = (offset, (dims[i + 1],))
            offset += dims[i + 1]
        self.params = np.zeros(offset, dtype=np.float64)

        rng = np.random.default_rng(seed)
        for i in range(4):  # decode layer (i=4) stays exactly zero
            w = self.weight(f"W{i}")
            w[...] = rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=w.shape)

    def weight(self, name: str) -> np.ndarray:
        offset, shape = self.slices[name]
        return self.params[offset : offset + int(np.prod(shape))].reshape(shape)

    @property
    def num_params(self) -> int:
        return len(self.params)


def encode_pose(pose: CameraView) -> np.ndarray:
    q = quat_normalize(pose.rotation)
    vec = np.concatenate([q, pose.translation])
    return POSE_ENCODING.encode(vec[None, :])[0]


def ade_forward(net: AdeNetwork, positions: np.ndarray, pose: CameraView,
                deviation_scale: float = DEFAULT_DEVIATION_SCALE):
    """Estimate per-Gaussian deviations for every latent step.

    Returns (DeviationSet, AdeTape); the tape feeds ade_backward.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = len(positions)
    if n == 0:
        empty = DeviationSet(np.zeros((net.num_latents, 0, 3)), float(deviation_scale))
        return empty, AdeTape(np.zeros((0, net.input_dim)), [], np.zeros((0, 0)), 0)

    enc_pos = POSITION_ENCODING.encode(positions)
    enc_pose = np.broadcast_to(encode_pose(pose), (n, POSE_ENCODING.output_dim(7)))
    x = np.concatenate([enc_pos, enc_pose], axis=1)

    hidden = []
    h = x
    for i in range(4):
        h = np.maximum(h @ net.weight(f"W{i}") + net.weight(f"b{i}"), 0.0)
        hidden.append(h)
    out = h @ net.weight("W4") + net.weight("b4")

    devs = out.reshape(n, net.num_latents, 3).transpose(1, 0, 2)
    tape = AdeTape(
        inputs=x, hidden=hidden,
        enc_jac=POSITION_ENCODING.encode_jacobian(positions),
        num_gaussians=n,
    )
    return DeviationSet(devs, float(deviation_scale)), tape


def ade_backward(net: AdeNetwork, tape: AdeTape, grad_deviations: np.ndarray):
    """Gradients of the MLP output w.r.t. parameters and input positions.

    grad_deviations is (l, N, 3) in world units (i.e. already divided by any
    deviation scaling applied downstream).
    """
    n = tape.num_gaussians
    g_params = np.zeros_like(net.params)
    if n == 0:
        return g_params, np.zeros((0, 3))

    g_out = np.asarray(grad_deviations).transpose(1, 0, 2).reshape(n, net.output_dim)

    def gslot(name):
        offset, shape = net.slices[name]
        return g_params[offset : offset + int(np.prod(shape))].reshape(shape)

    g = g_out
    for i in range(4, -1, -1):
        inp = tape.hidden[i - 1] if i > 0 else tape.inputs
        gslot(f"W{i}")[...] = inp.T @ g
        gslot(f"b{i}")[...] = g.sum(axis=0)
        g = g @ net.weight(f"W{i}").T
        if i > 0:
            g = g * (tape.hidden[i - 1] > 0)

    pos_dim = POSITION_ENCODING.output_dim(3)
    g_enc_pos = g[:, :pos_dim]  # pose block is not optimized
    per = 2 * POSITION_FREQUENCIES + 1
    g_positions = np.empty((n, 3))
    for c in range(3):
        block = slice(c * per, (c + 1) * per)
        g_positions[:, c] = (g_enc_pos[:, block] * tape.enc_jac[:, block]).sum(axis=1)
    return g_params, g_positions


def apply_deviations(positions: np.ndarray, devs: DeviationSet, i: int) -> np.ndarray:
    """Positions for latent i (1-based): x + lambda_p * delta_i."""
    if not 1 <= i <= devs.num_latents:
        raise DataError(f"latent index {i} out of range 1..{devs.num_latents}")
    return positions + devs.lambda_p * devs.deviations[i - 1]
