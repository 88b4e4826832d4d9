"""Differentiable CPU splatting of a GaussianCloud into an image.

Forward: project every Gaussian to a 2D mean + covariance, depth-sort, then
alpha-composite front to back (naive per-pixel loop over a 3-sigma bounding
box; the hot loop lives in `kernels`). Backward: exact adjoint of the forward
compositing, chain-ruled through projection, covariance construction and the
log-scale / opacity-logit / quaternion-normalization reparameterizations.

All math is float64. Covariances are regularized with +COV2D_REG on the
diagonal before inversion, which slightly dilates every splat and is part of
the differentiated model (gradients include it).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import CameraView, DataError, GaussianCloud, quat_normalize

logger = logging.getLogger(__name__)

NEAR_PLANE = 0.01
COV2D_REG = 0.1
CULL_SIGMA = 3.0


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray      # (2,) pixels
    cov2d: np.ndarray       # (2, 2) pixels^2, regularized
    depth: float            # camera-space z
    gaussian_index: int


@dataclass
class RenderGrads:
    """Loss gradients w.r.t. the stored (reparameterized) cloud arrays."""

    position: np.ndarray        # (N, 3)
    rotation: np.ndarray        # (N, 4), tangent to the unit-quaternion sphere
    log_scale: np.ndarray       # (N, 3)
    opacity_logit: np.ndarray   # (N,)
    color: np.ndarray           # (N, 3)

    def scaled(self, f: float) -> "RenderGrads":
        return RenderGrads(
            self.position * f, self.rotation * f, self.log_scale * f,
            self.opacity_logit * f, self.color * f,
        )

    def add_(self, other: "RenderGrads") -> "RenderGrads":
        self.position += other.position
        self.rotation += other.rotation
        self.log_scale += other.log_scale
        self.opacity_logit += other.opacity_logit
        self.color += other.color
        return self


@dataclass
class CompositingTape:
    """Everything the analytic backward pass needs from one forward call."""

    n_total: int
    order: np.ndarray           # (S,) original indices, front-to-back
    means2d: np.ndarray         # (S, 2)
    conics: np.ndarray          # (S, 3) inverse-covariance upper triangle
    opacities: np.ndarray       # (S,) sigmoided
    colors: np.ndarray          # (S, 3)
    bboxes: np.ndarray          # (S, 4)
    p_cam: np.ndarray           # (S, 3) camera-space centers
    cov_cam: np.ndarray         # (S, 3, 3) camera-frame 3D covariance
    rotmats: np.ndarray         # (S, 3, 3) per-Gaussian orientation
    quats: np.ndarray           # (S, 4) normalized quaternions
    sq_scales: np.ndarray       # (S, 3) squared scales
    t_final: np.ndarray         # (H, W)
    n_contrib: np.ndarray       # (H, W)
    view: CameraView
    background: np.ndarray


def _batch_rotmats(quats: np.ndarray) -> np.ndarray:
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    R = np.empty((len(quats), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _rotmat_quat_jacobian(quats: np.ndarray) -> np.ndarray:
    """d(rotation matrix)/d(unit quaternion), shape (S, 4, 3, 3)."""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    zero = np.zeros_like(w)
    J = np.empty((len(quats), 4, 3, 3))
    J[:, 0] = 2 * np.stack(
        [zero, -z, y, z, zero, -x, -y, x, zero], axis=-1
    ).reshape(-1, 3, 3)
    J[:, 1] = 2 * np.stack(
        [zero, y, z, y, -2 * x, -w, z, w, -2 * x], axis=-1
    ).reshape(-1, 3, 3)
    J[:, 2] = 2 * np.stack(
        [-2 * y, x, w, x, zero, z, -w, z, -2 * y], axis=-1
    ).reshape(-1, 3, 3)
    J[:, 3] = 2 * np.stack(
        [-2 * z, -w, x, w, -2 * z, y, x, y, zero], axis=-1
    ).reshape(-1, 3, 3)
    return J


def _project_arrays(cloud: GaussianCloud, view: CameraView):
    """Vectorized projection of every Gaussian; returns None-padded arrays
    plus a keep mask (False where culled)."""
    W, H = view.resolution
    fx, fy = view.focal
    cx, cy = view.principal_point
    Rv = view.rotmat

    p_cam = cloud.positions @ Rv.T + view.translation
    depth = p_cam[:, 2]
    keep = depth > NEAR_PLANE

    z = np.where(keep, depth, 1.0)
    u = fx * p_cam[:, 0] / z + cx
    v = fy * p_cam[:, 1] / z + cy

    quats = quat_normalize(cloud.rotations)
    Rg = _batch_rotmats(quats)
    sq = np.exp(2.0 * cloud.log_scales)
    # world covariance R diag(s^2) R^T, then to camera frame
    cov_w = np.einsum("nij,nj,nkj->nik", Rg, sq, Rg)
    cov_cam = np.einsum("ij,njk,lk->nil", Rv, cov_w, Rv)

    # projection Jacobian at the center
    J = np.zeros((len(cloud), 2, 3))
    J[:, 0, 0] = fx / z
    J[:, 1, 1] = fy / z
    J[:, 0, 2] = -fx * p_cam[:, 0] / z**2
    J[:, 1, 2] = -fy * p_cam[:, 1] / z**2

    cov2d = np.einsum("nij,njk,nlk->nil", J, cov_cam, J)
    cov2d[:, 0, 0] += COV2D_REG
    cov2d[:, 1, 1] += COV2D_REG

    # 3-sigma radius from the larger eigenvalue of the 2x2 covariance
    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    disc = np.sqrt(np.maximum(0.0, (0.5 * (cov2d[:, 0, 0] - cov2d[:, 1, 1])) ** 2 + cov2d[:, 0, 1] ** 2))
    lam_max = mid + disc
    radius = CULL_SIGMA * np.sqrt(np.maximum(lam_max, 0.0))
    radius = np.where(np.isfinite(radius), radius, 0.0)
    u = np.nan_to_num(u, posinf=0.0, neginf=0.0)
    v = np.nan_to_num(v, posinf=0.0, neginf=0.0)

    keep &= (u + radius >= 0) & (u - radius <= W - 1) & (v + radius >= 0) & (v - radius <= H - 1)

    x0 = np.maximum(0, np.ceil(u - radius)).astype(np.int64)
    x1 = np.minimum(W, np.floor(u + radius) + 1).astype(np.int64)
    y0 = np.maximum(0, np.ceil(v - radius)).astype(np.int64)
    y1 = np.minimum(H, np.floor(v + radius) + 1).astype(np.int64)
    bboxes = np.stack([x0, x1, y0, y1], axis=1)

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    bad = keep & ~((det > 0) & np.isfinite(det))
    if bad.any():
        logger.warning("skipping %d Gaussians with singular 2D covariance", int(bad.sum()))
        keep &= ~bad

    mean2d = np.stack([u, v], axis=1)
    return mean2d, cov2d, det, depth, bboxes, p_cam, cov_cam, Rg, quats, sq, keep


def project(g, view: CameraView):
    """Project a single Gaussian; returns ProjectedGaussian or None if culled."""
    cloud = GaussianCloud(
        positions=g.position[None],
        rotations=g.rotation[None],
        log_scales=np.log(g.scale)[None],
        opacity_logits=np.array([0.0]),
        colors=np.clip(g.color, 0.0, 1.0)[None],
    )
    mean2d, cov2d, _, depth, _, _, _, _, _, _, keep = _project_arrays(cloud, view)
    if not keep[0]:
        return None
    return ProjectedGaussian(mean2d=mean2d[0], cov2d=cov2d[0], depth=float(depth[0]), gaussian_index=0)


def forward(cloud: GaussianCloud, view: CameraView, background=(0.0, 0.0, 0.0)):
    """Render the cloud into an (H, W, 3) image; also returns the tape for backward."""
    W, H = view.resolution
    bg = np.asarray(background, dtype=np.float64)

    mean2d, cov2d, det, depth, bboxes, p_cam, cov_cam, Rg, quats, sq, keep = _project_arrays(cloud, view)

    idx = np.nonzero(keep)[0]
    # front-to-back, ties broken by original index for determinism
    order = idx[np.lexsort((idx, depth[idx]))]

    conics = np.empty((len(order), 3))
    d = det[order]
    conics[:, 0] = cov2d[order, 1, 1] / d
    conics[:, 1] = -cov2d[order, 0, 1] / d
    conics[:, 2] = cov2d[order, 0, 0] / d

    img, t_final, n_contrib = kernels.forward_composite(
        np.ascontiguousarray(mean2d[order]),
        np.ascontiguousarray(conics),
        np.ascontiguousarray(cloud.opacities[order]),
        np.ascontiguousarray(cloud.colors[order]),
        np.ascontiguousarray(bboxes[order]),
        H, W, bg,
    )

    tape = CompositingTape(
        n_total=len(cloud),
        order=order,
        means2d=mean2d[order],
        conics=conics,
        opacities=cloud.opacities[order],
        colors=cloud.colors[order],
        bboxes=bboxes[order],
        p_cam=p_cam[order],
        cov_cam=cov_cam[order],
        rotmats=Rg[order],
        quats=quats[order],
        sq_scales=sq[order],
        t_final=t_final,
        n_contrib=n_contrib,
        view=view,
        background=bg,
    )
    return img, tape


def backward(tape: CompositingTape, grad_img: np.ndarray) -> RenderGrads:
    """Exact gradients of the forward render w.r.t. all five parameter groups."""
    H, W = tape.t_final.shape
    grad_img = np.asarray(grad_img, dtype=np.float64)
    if grad_img.shape != (H, W, 3):
        raise DataError(
            f"tape/gradient shape mismatch: expected {(H, W, 3)}, got {grad_img.shape}"
        )

    g_mean2d, g_conic, g_opa, g_color = kernels.backward_composite(
        np.ascontiguousarray(tape.means2d),
        np.ascontiguousarray(tape.conics),
        np.ascontiguousarray(tape.opacities),
        np.ascontiguousarray(tape.colors),
        np.ascontiguousarray(tape.bboxes),
        H, W, tape.background,
        tape.t_final, tape.n_contrib, np.ascontiguousarray(grad_img),
    )

    S = len(tape.order)
    view = tape.view
    fx, fy = view.focal
    Rv = view.rotmat

    # conic = inv(cov2d): dL/dcov2d = -K dL/dK K with symmetric-matrix grads
    gK = np.empty((S, 2, 2))
    gK[:, 0, 0] = g_conic[:, 0]
    gK[:, 0, 1] = gK[:, 1, 0] = 0.5 * g_conic[:, 1]
    gK[:, 1, 1] = g_conic[:, 2]
    K = np.empty((S, 2, 2))
    K[:, 0, 0] = tape.conics[:, 0]
    K[:, 0, 1] = K[:, 1, 0] = tape.conics[:, 1]
    K[:, 1, 1] = tape.conics[:, 2]
    g_cov2d = -np.einsum("nij,njk,nkl->nil", K, gK, K)

    # cov2d = J M J^T (+reg): M path and J path
    x, y, z = tape.p_cam[:, 0], tape.p_cam[:, 1], tape.p_cam[:, 2]
    J = np.zeros((S, 2, 3))
    J[:, 0, 0] = fx / z
    J[:, 1, 1] = fy / z
    J[:, 0, 2] = -fx * x / z**2
    J[:, 1, 2] = -fy * y / z**2

    M = tape.cov_cam
    g_M = np.einsum("nji,njk,nkl->nil", J, g_cov2d, J)
    g_J = 2.0 * np.einsum("nij,njk,nkl->nil", g_cov2d, J, M)

    # mean2d = perspective(p_cam): the projection Jacobian is the same J
    g_pcam = np.einsum("nji,nj->ni", J, g_mean2d)
    # J itself varies with p_cam
    g_pcam[:, 0] += g_J[:, 0, 2] * (-fx / z**2)
    g_pcam[:, 1] += g_J[:, 1, 2] * (-fy / z**2)
    g_pcam[:, 2] += (
        g_J[:, 0, 0] * (-fx / z**2)
        + g_J[:, 1, 1] * (-fy / z**2)
        + g_J[:, 0, 2] * (2 * fx * x / z**3)
        + g_J[:, 1, 2] * (2 * fy * y / z**3)
    )

    g_position_s = g_pcam @ Rv

    # camera-frame covariance back to world, then through R diag(s^2) R^T
    g_covw = np.einsum("ji,njk,kl->nil", Rv, g_M, Rv)
    Rg = tape.rotmats
    sym = g_covw + np.swapaxes(g_covw, 1, 2)
    g_R = np.einsum("nij,njk,nk->nik", sym, Rg, tape.sq_scales)
    rtgr = np.einsum("nji,njk,nkl->nil", Rg, g_covw, Rg)
    g_logscale_s = 2.0 * tape.sq_scales * np.einsum("nii->ni", rtgr)

    dRdq = _rotmat_quat_jacobian(tape.quats)
    g_quat = np.einsum("nqij,nij->nq", dRdq, g_R)
    # project onto the tangent space of the unit sphere (normalization adjoint)
    g_quat -= tape.quats * np.einsum("nq,nq->n", tape.quats, g_quat)[:, None]

    o = tape.opacities
    g_logit_s = g_opa * o * (1.0 - o)

    grads = RenderGrads(
        position=np.zeros((tape.n_total, 3)),
        rotation=np.zeros((tape.n_total, 4)),
        log_scale=np.zeros((tape.n_total, 3)),
        opacity_logit=np.zeros(tape.n_total),
        color=np.zeros((tape.n_total, 3)),
    )
    grads.position[tape.order] = g_position_s
    grads.rotation[tape.order] = g_quat
    grads.log_scale[tape.order] = g_logscale_s
    grads.opacity_logit[tape.order] = g_logit_s
    grads.color[tape.order] = g_color
    return grads
